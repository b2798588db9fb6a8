#include "mvdepth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mvdepth {

namespace {

// --- value noise -----------------------------------------------------------

double lattice_hash(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
    std::uint64_t h = seed;
    h ^= static_cast<std::uint64_t>(x) * 0x8da6b343ULL;
    h ^= static_cast<std::uint64_t>(y) * 0xd8163841ULL;
    h ^= static_cast<std::uint64_t>(z) * 0xcb1ab31fULL;
    h = (h ^ (h >> 31)) * 0x7fb5d329728ea185ULL;
    h = (h ^ (h >> 27)) * 0x81dadef4bc2dd44dULL;
    h ^= h >> 33;
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise3(const Eigen::Vector3d& p, std::uint64_t seed) {
    const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const auto iz = static_cast<std::int64_t>(fz);
    const double tx = smoothstep(p.x() - fx);
    const double ty = smoothstep(p.y() - fy);
    const double tz = smoothstep(p.z() - fz);
    double acc[2];
    for (int dz = 0; dz < 2; ++dz) {
        const double c00 = lattice_hash(ix, iy, iz + dz, seed);
        const double c10 = lattice_hash(ix + 1, iy, iz + dz, seed);
        const double c01 = lattice_hash(ix, iy + 1, iz + dz, seed);
        const double c11 = lattice_hash(ix + 1, iy + 1, iz + dz, seed);
        const double a = c00 + (c10 - c00) * tx;
        const double b = c01 + (c11 - c01) * tx;
        acc[dz] = a + (b - a) * ty;
    }
    return acc[0] + (acc[1] - acc[0]) * tz;
}

// --- intersections ----------------------------------------------------------

constexpr double kRayEps = 1e-9;

struct LocalHit {
    double s;
    Eigen::Vector3d normal;
};

bool intersect_plane(const ScenePrimitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                     LocalHit& hit) {
    const double denom = p.normal.dot(d);
    if (std::fabs(denom) < 1e-14) return false;
    const double s = (p.offset - p.normal.dot(o)) / denom;
    if (s <= kRayEps) return false;
    hit.s = s;
    hit.normal = denom < 0.0 ? p.normal : Eigen::Vector3d(-p.normal);
    return true;
}

bool intersect_box(const ScenePrimitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   LocalHit& hit) {
    double t_near = -1e300, t_far = 1e300;
    int near_axis = -1;
    double near_sign = 0.0;
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(d[a]) < 1e-14) {
            if (o[a] < p.box_min[a] || o[a] > p.box_max[a]) return false;
            continue;
        }
        double t0 = (p.box_min[a] - o[a]) / d[a];
        double t1 = (p.box_max[a] - o[a]) / d[a];
        double sign = -1.0;
        if (t0 > t1) {
            std::swap(t0, t1);
            sign = 1.0;
        }
        if (t0 > t_near) {
            t_near = t0;
            near_axis = a;
            near_sign = sign;
        }
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return false;
    }
    if (t_near <= kRayEps || near_axis < 0) return false;  // origin inside the box: ignore
    hit.s = t_near;
    hit.normal = Eigen::Vector3d::Zero();
    hit.normal[near_axis] = near_sign;
    return true;
}

bool intersect_sphere(const ScenePrimitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                      LocalHit& hit) {
    const Eigen::Vector3d oc = o - p.center;
    const double a = d.dot(d);
    const double b = 2.0 * oc.dot(d);
    const double c = oc.dot(oc) - p.radius * p.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return false;
    const double sq = std::sqrt(disc);
    double s = (-b - sq) / (2.0 * a);
    if (s <= kRayEps) s = (-b + sq) / (2.0 * a);
    if (s <= kRayEps) return false;
    hit.s = s;
    hit.normal = (o + s * d - p.center).normalized();
    return true;
}

Eigen::Vector3d dynamic_shift(const SceneGeometry& geom, int primitive, int frame_offset) {
    if (primitive == geom.dynamic_index) {
        return geom.dynamic_velocity * static_cast<double>(frame_offset);
    }
    return Eigen::Vector3d::Zero();
}

// --- shading ----------------------------------------------------------------

double primitive_albedo(const SceneGeometry& geom, int idx, const Eigen::Vector3d& point) {
    const auto& p = geom.primitives[idx];
    const double n = value_noise3(point * p.noise_scale,
                                  geom.texture_seed + 0x9e37ULL * static_cast<std::uint64_t>(idx));
    return p.albedo_base * (1.0 + geom.texture_level * 0.5 * (2.0 * n - 1.0));
}

double shade_hit(const SceneGeometry& geom, const RayHit& hit) {
    const double albedo = primitive_albedo(geom, hit.primitive, hit.point);
    const double diffuse = std::max(0.0, hit.normal.dot(geom.light_dir));
    return std::clamp(albedo * (0.3 + 0.7 * diffuse), 0.0, 1.0);
}

struct CameraRay {
    Eigen::Vector3d origin;
    Eigen::Vector3d dir;  // scaled so the ray parameter equals camera z-depth
};

CameraRay make_ray(const Intrinsics& k, const Pose& pose, double u, double v) {
    const Eigen::Vector3d dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    CameraRay r;
    r.origin = -(pose.R.transpose() * pose.t);
    r.dir = pose.R.transpose() * dir_cam;
    return r;
}

}  // namespace

std::optional<RayHit> cast_ray(const SceneGeometry& geom, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir, int frame_offset) {
    std::optional<RayHit> best;
    for (int i = 0; i < static_cast<int>(geom.primitives.size()); ++i) {
        const auto& p = geom.primitives[i];
        const Eigen::Vector3d shift = dynamic_shift(geom, i, frame_offset);
        const Eigen::Vector3d o = origin - shift;
        LocalHit lh;
        bool ok = false;
        switch (p.kind) {
            case ScenePrimitive::Kind::kPlane: ok = intersect_plane(p, o, dir, lh); break;
            case ScenePrimitive::Kind::kBox: ok = intersect_box(p, o, dir, lh); break;
            case ScenePrimitive::Kind::kSphere: ok = intersect_sphere(p, o, dir, lh); break;
        }
        if (!ok) continue;
        if (!best || lh.s < best->depth) {
            RayHit hit;
            hit.depth = lh.s;
            hit.primitive = i;
            hit.point = o + lh.s * dir;  // in the primitive's own (shifted) frame
            hit.normal = lh.normal;
            best = hit;
        }
    }
    return best;
}

FloatImage render_frame(const SceneGeometry& geom, const SceneConfig& cfg, const Intrinsics& k,
                        const Pose& pose, int frame_offset) {
    FloatImage img(cfg.channels, cfg.height, cfg.width);
    for (int v = 0; v < cfg.height; ++v)
        for (int u = 0; u < cfg.width; ++u) {
            const CameraRay ray = make_ray(k, pose, u, v);
            const auto hit = cast_ray(geom, ray.origin, ray.dir, frame_offset);
            double value = 0.0;
            if (hit) value = shade_hit(geom, *hit);
            for (int c = 0; c < cfg.channels; ++c) {
                // mild per-channel tint keeps 3-channel mode non-degenerate
                const double tinted = cfg.channels == 1 ? value : value * (1.0 - 0.08 * c);
                img.at(c, v, u) = snap_f32(std::clamp(tinted, 0.0, 1.0));
            }
        }
    return img;
}

DepthMap render_depth(const SceneGeometry& geom, const SceneConfig& cfg, const Intrinsics& k,
                      const Pose& pose, int frame_offset) {
    DepthMap depth(cfg.height, cfg.width);
    for (int v = 0; v < cfg.height; ++v)
        for (int u = 0; u < cfg.width; ++u) {
            const CameraRay ray = make_ray(k, pose, u, v);
            const auto hit = cast_ray(geom, ray.origin, ray.dir, frame_offset);
            if (hit) {
                depth.at(v, u) = hit->depth;
                depth.valid[static_cast<std::size_t>(v) * cfg.width + u] = 1;
            }
        }
    return depth;
}

std::vector<uint8_t> dynamic_pixel_mask(const SceneGeometry& geom, const SceneConfig& cfg,
                                        const Intrinsics& k, const Pose& pose) {
    std::vector<uint8_t> mask(static_cast<std::size_t>(cfg.height) * cfg.width, 0);
    if (geom.dynamic_index < 0) return mask;
    for (int v = 0; v < cfg.height; ++v)
        for (int u = 0; u < cfg.width; ++u) {
            const CameraRay ray = make_ray(k, pose, u, v);
            const auto hit = cast_ray(geom, ray.origin, ray.dir, 0);
            if (hit && hit->primitive == geom.dynamic_index) {
                mask[static_cast<std::size_t>(v) * cfg.width + u] = 1;
            }
        }
    return mask;
}

SceneGeometry build_scene_geometry(const SceneConfig& cfg, std::uint64_t seed) {
    Rng rng(split_seed(seed, 0));
    SceneGeometry geom;
    geom.texture_seed = split_seed(seed, 7);
    geom.texture_level = cfg.texture_level >= 0.0 ? cfg.texture_level : rng.uniform();

    const double ground_y = 1.1;
    const double wall_z = 0.85 * cfg.d_max;

    ScenePrimitive ground;
    ground.kind = ScenePrimitive::Kind::kPlane;
    ground.normal = Eigen::Vector3d(0.0, -1.0, 0.0);  // up, with +y pointing down
    ground.offset = -ground_y;
    ground.albedo_base = rng.uniform(0.35, 0.55);
    ground.noise_scale = rng.uniform(1.2, 2.2);
    geom.primitives.push_back(ground);

    ScenePrimitive wall;
    wall.kind = ScenePrimitive::Kind::kPlane;
    wall.normal = Eigen::Vector3d(0.0, 0.0, -1.0);  // toward the camera
    wall.offset = -wall_z;
    wall.albedo_base = rng.uniform(0.28, 0.5);
    wall.noise_scale = rng.uniform(1.2, 2.5);
    geom.primitives.push_back(wall);

    const int n_objects = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    for (int i = 0; i < n_objects; ++i) {
        ScenePrimitive obj;
        const bool is_box = rng.uniform() < 0.5;
        const double x = rng.uniform(-2.3, 2.3);
        const double z = rng.uniform(1.3 * cfg.d_min, 0.62 * cfg.d_max);
        const bool resting = rng.uniform() < 0.7;
        if (is_box) {
            obj.kind = ScenePrimitive::Kind::kBox;
            const Eigen::Vector3d half(rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75),
                                       rng.uniform(0.25, 0.75));
            const double cy = resting ? ground_y - half.y() : rng.uniform(-0.3, 0.6);
            const Eigen::Vector3d c(x, cy, z);
            obj.box_min = c - half;
            obj.box_max = c + half;
        } else {
            obj.kind = ScenePrimitive::Kind::kSphere;
            obj.radius = rng.uniform(0.25, 0.7);
            const double cy = resting ? ground_y - obj.radius : rng.uniform(-0.3, 0.6);
            obj.center = Eigen::Vector3d(x, cy, z);
        }
        obj.albedo_base = rng.uniform(0.25, 0.65);
        obj.noise_scale = rng.uniform(1.5, 3.0);
        geom.primitives.push_back(obj);
    }

    if (n_objects > 0 && rng.uniform() < cfg.dynamic_probability) {
        geom.dynamic_index = 2 + rng.uniform_int(0, n_objects - 1);
        const double speed = rng.uniform(cfg.dynamic_speed_min, cfg.dynamic_speed_max);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        geom.dynamic_velocity =
            Eigen::Vector3d(sign * speed, 0.0, rng.uniform(-0.02, 0.02));
    }
    return geom;
}

namespace {

void make_cameras(const SceneConfig& cfg, std::uint64_t seed, std::vector<Intrinsics>& ks,
                  std::vector<Pose>& poses, int& reference) {
    Rng rng(split_seed(seed, 1));
    reference = (cfg.n_frames - 1) / 2;
    Intrinsics k;
    k.fx = k.fy = 1.25 * cfg.width;
    k.cx = 0.5 * (cfg.width - 1);
    k.cy = 0.5 * (cfg.height - 1);

    const double yaw_step = rng.uniform(-0.01, 0.01);  // radians, ~0.57 deg max
    ks.assign(cfg.n_frames, k);
    poses.resize(cfg.n_frames);
    for (int i = 0; i < cfg.n_frames; ++i) {
        const double off = static_cast<double>(i - reference);
        if (off == 0.0) {
            poses[i] = Pose{};  // world frame anchored at the reference camera
            continue;
        }
        const Eigen::Vector3d position(off * cfg.baseline, 0.0, 0.0);  // camera center, world
        const Eigen::Matrix3d cam_to_world =
            Eigen::AngleAxisd(off * yaw_step, Eigen::Vector3d::UnitY()).toRotationMatrix();
        Pose p;
        p.R = cam_to_world.transpose();
        p.t = -p.R * position;
        poses[i] = p;
    }
}

}  // namespace

SceneSample generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
    if (cfg.width < 4 || cfg.height < 4 || cfg.width % 4 != 0 || cfg.height % 4 != 0) {
        throw std::invalid_argument("generate_scene: image dims must be multiples of 4");
    }
    if (cfg.n_frames < 2) throw std::invalid_argument("generate_scene: need n_frames >= 2");
    if (!(cfg.d_min > 0.0 && cfg.d_min < cfg.d_max)) {
        throw std::invalid_argument("generate_scene: need 0 < d_min < d_max");
    }
    if (cfg.channels != 1 && cfg.channels != 3) {
        throw std::invalid_argument("generate_scene: channels must be 1 or 3");
    }

    for (int attempt = 0; attempt < 10; ++attempt) {
        const std::uint64_t sub = attempt == 0 ? seed : split_seed(seed, 1000 + attempt);
        const SceneGeometry geom = build_scene_geometry(cfg, sub);

        SceneSample sample;
        sample.seed = seed;
        sample.baseline = cfg.baseline;
        sample.texture_level = geom.texture_level;
        sample.has_dynamic_object = geom.dynamic_index >= 0;
        make_cameras(cfg, sub, sample.intrinsics, sample.poses, sample.reference);

        sample.frames.reserve(cfg.n_frames);
        for (int i = 0; i < cfg.n_frames; ++i) {
            sample.frames.push_back(render_frame(geom, cfg, sample.intrinsics[i], sample.poses[i],
                                                 i - sample.reference));
        }
        sample.gt_depth = render_depth(geom, cfg, sample.intrinsics[sample.reference],
                                       sample.poses[sample.reference], 0);

        std::int64_t covered = 0;
        for (auto v : sample.gt_depth.valid) covered += v;
        if (covered == static_cast<std::int64_t>(sample.gt_depth.valid.size())) return sample;
    }
    throw std::runtime_error("generate_scene: no visible surface after 10 attempts (seed " +
                             std::to_string(seed) + ")");
}

ReprojectionReport reprojection_check(const SceneGeometry& geom, const SceneConfig& cfg,
                                      const SceneSample& sample, int src_frame) {
    if (src_frame < 0 || src_frame >= static_cast<int>(sample.frames.size()) ||
        src_frame == sample.reference) {
        throw std::invalid_argument("reprojection_check: bad source frame index");
    }
    const int ref = sample.reference;
    const auto& k_ref = sample.intrinsics[ref];
    const auto& k_src = sample.intrinsics[src_frame];
    const auto& p_ref = sample.poses[ref];
    const auto& p_src = sample.poses[src_frame];
    const FloatImage& img_ref = sample.frames[ref];
    const FloatImage& img_src = sample.frames[src_frame];

    const DepthMap src_depth =
        render_depth(geom, cfg, k_src, p_src, src_frame - ref);
    const std::vector<uint8_t> dyn = dynamic_pixel_mask(geom, cfg, k_ref, p_ref);

    ReprojectionReport rep;
    double sum_static = 0.0, sum_dynamic = 0.0;

    for (int v = 0; v < cfg.height; ++v)
        for (int u = 0; u < cfg.width; ++u) {
            const std::size_t pix = static_cast<std::size_t>(v) * cfg.width + u;
            if (!sample.gt_depth.valid[pix]) continue;
            const double d = sample.gt_depth.values[pix];
            const CameraRay ray = make_ray(k_ref, p_ref, u, v);
            const Eigen::Vector3d x_world = ray.origin + d * ray.dir;
            const Eigen::Vector3d x_src = p_src.R * x_world + p_src.t;
            if (!(x_src.z() > 1e-9)) continue;
            const double su = k_src.fx * x_src.x() / x_src.z() + k_src.cx;
            const double sv = k_src.fy * x_src.y() / x_src.z() + k_src.cy;
            if (su < 0.0 || su > cfg.width - 1 || sv < 0.0 || sv > cfg.height - 1) continue;

            const int x0 = static_cast<int>(std::floor(su));
            const int y0 = static_cast<int>(std::floor(sv));
            const double ax = su - x0, ay = sv - y0;
            auto sample_src = [&](int c) {
                auto px = [&](int yy, int xx) {
                    yy = std::clamp(yy, 0, cfg.height - 1);
                    xx = std::clamp(xx, 0, cfg.width - 1);
                    return img_src.at(c, yy, xx);
                };
                return (1 - ax) * (1 - ay) * px(y0, x0) + ax * (1 - ay) * px(y0, x0 + 1) +
                       (1 - ax) * ay * px(y0 + 1, x0) + ax * ay * px(y0 + 1, x0 + 1);
            };

            double err = 0.0;
            for (int c = 0; c < cfg.channels; ++c) {
                err += std::fabs(sample_src(c) - img_ref.at(c, v, u));
            }
            err /= cfg.channels;

            if (dyn[pix]) {
                sum_dynamic += err;
                ++rep.n_dynamic;
                continue;
            }
            // occlusion / depth-edge test against the source frame's own depth
            bool consistent = true;
            for (int dy = 0; dy <= 1 && consistent; ++dy)
                for (int dx = 0; dx <= 1 && consistent; ++dx) {
                    const int yy = std::clamp(y0 + dy, 0, cfg.height - 1);
                    const int xx = std::clamp(x0 + dx, 0, cfg.width - 1);
                    const double ds = src_depth.at(yy, xx);
                    if (std::fabs(ds - x_src.z()) > std::max(0.01 * x_src.z(), 0.02)) {
                        consistent = false;
                    }
                }
            if (!consistent) continue;
            sum_static += err;
            ++rep.n_static;
        }

    if (rep.n_static > 0) rep.mean_error_static = sum_static / rep.n_static;
    if (rep.n_dynamic > 0) rep.mean_error_dynamic = sum_dynamic / rep.n_dynamic;
    return rep;
}

// ---------------------------------------------------------------------------
// dataset files

namespace {

std::string scene_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05d", index);
    return buf;
}

void write_meta(const std::string& path, const SceneSample& s, const SceneConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("make_dataset: cannot open '" + path + "'");
    f.precision(17);
    f << "seed=" << s.seed << '\n'
      << "n_frames=" << s.frames.size() << '\n'
      << "reference=" << s.reference << '\n'
      << "width=" << cfg.width << '\n'
      << "height=" << cfg.height << '\n'
      << "channels=" << cfg.channels << '\n'
      << "d_min=" << cfg.d_min << '\n'
      << "d_max=" << cfg.d_max << '\n'
      << "baseline=" << s.baseline << '\n'
      << "texture_level=" << s.texture_level << '\n'
      << "has_dynamic_object=" << (s.has_dynamic_object ? 1 : 0) << '\n';
    if (!f) throw std::runtime_error("make_dataset: write failed for '" + path + "'");
}

std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_sample: cannot open '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("load_sample: malformed line " + std::to_string(lineno) +
                                     " in '" + path + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, const std::string& path) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
        throw std::runtime_error("load_sample: missing key '" + key + "' in '" + path + "'");
    }
    return it->second;
}

}  // namespace

void make_dataset(const SceneConfig& cfg, int n_scenes, const std::string& out_dir) {
    if (n_scenes < 0) throw std::invalid_argument("make_dataset: n_scenes must be >= 0");
    fs::create_directories(out_dir);

    for (int i = 0; i < n_scenes; ++i) {
        const std::uint64_t scene_seed = split_seed(cfg.seed, static_cast<std::uint64_t>(i));
        const SceneSample s = generate_scene(cfg, scene_seed);
        const fs::path dir = fs::path(out_dir) / scene_dir_name(i);
        fs::create_directories(dir);
        for (std::size_t fidx = 0; fidx < s.frames.size(); ++fidx) {
            write_pfm((dir / ("frame_" + std::to_string(fidx) + ".pfm")).string(),
                      s.frames[fidx]);
            save_camera_file((dir / ("frame_" + std::to_string(fidx) + ".cam")).string(),
                             s.intrinsics[fidx], s.poses[fidx]);
        }
        FloatImage depth_img(1, s.gt_depth.height, s.gt_depth.width);
        for (int y = 0; y < s.gt_depth.height; ++y)
            for (int x = 0; x < s.gt_depth.width; ++x) {
                depth_img.at(0, y, x) = s.gt_depth.is_valid(y, x) ? s.gt_depth.at(y, x) : 0.0;
            }
        write_pfm((dir / "gt_depth.pfm").string(), depth_img);
        write_meta((dir / "meta.txt").string(), s, cfg);
    }

    std::ofstream mf(fs::path(out_dir) / "manifest.txt");
    if (!mf) throw std::runtime_error("make_dataset: cannot write manifest in '" + out_dir + "'");
    mf.precision(17);
    mf << "n_scenes=" << n_scenes << '\n'
       << "master_seed=" << cfg.seed << '\n'
       << "width=" << cfg.width << '\n'
       << "height=" << cfg.height << '\n'
       << "channels=" << cfg.channels << '\n'
       << "n_frames=" << cfg.n_frames << '\n'
       << "d_min=" << cfg.d_min << '\n'
       << "d_max=" << cfg.d_max << '\n'
       << "baseline=" << cfg.baseline << '\n'
       << "texture_level=" << cfg.texture_level << '\n'
       << "dynamic_probability=" << cfg.dynamic_probability << '\n';
    if (!mf) throw std::runtime_error("make_dataset: manifest write failed in '" + out_dir + "'");
}

SceneSample load_sample(const std::string& scene_dir) {
    const fs::path dir(scene_dir);
    const auto meta_path = (dir / "meta.txt").string();
    const auto kv = read_kv(meta_path);

    SceneSample s;
    s.seed = std::stoull(require_key(kv, "seed", meta_path));
    const int n_frames = std::stoi(require_key(kv, "n_frames", meta_path));
    s.reference = std::stoi(require_key(kv, "reference", meta_path));
    s.texture_level = std::stod(require_key(kv, "texture_level", meta_path));
    s.has_dynamic_object = require_key(kv, "has_dynamic_object", meta_path) == "1";
    s.baseline = std::stod(require_key(kv, "baseline", meta_path));
    const int width = std::stoi(require_key(kv, "width", meta_path));
    const int height = std::stoi(require_key(kv, "height", meta_path));

    if (n_frames < 2 || s.reference < 0 || s.reference >= n_frames) {
        throw std::runtime_error("load_sample: inconsistent frame bookkeeping in '" + meta_path +
                                 "'");
    }
    for (int i = 0; i < n_frames; ++i) {
        const auto img_path = dir / ("frame_" + std::to_string(i) + ".pfm");
        const auto cam_path = dir / ("frame_" + std::to_string(i) + ".cam");
        if (!fs::exists(img_path) || !fs::exists(cam_path)) {
            throw std::runtime_error("load_sample: meta declares " + std::to_string(n_frames) +
                                     " frames but frame " + std::to_string(i) +
                                     " files are missing in '" + scene_dir + "'");
        }
        FloatImage img = read_pfm(img_path.string());
        if (img.width != width || img.height != height) {
            throw std::runtime_error("load_sample: frame " + std::to_string(i) +
                                     " dims disagree with meta in '" + scene_dir + "'");
        }
        Intrinsics k;
        Pose p;
        load_camera_file(cam_path.string(), k, p);
        s.frames.push_back(std::move(img));
        s.intrinsics.push_back(k);
        s.poses.push_back(p);
    }

    FloatImage depth_img = read_pfm((dir / "gt_depth.pfm").string());
    if (depth_img.channels != 1 || depth_img.width != width || depth_img.height != height) {
        throw std::runtime_error("load_sample: gt_depth dims disagree with meta in '" +
                                 scene_dir + "'");
    }
    s.gt_depth = DepthMap(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double v = depth_img.at(0, y, x);
            s.gt_depth.at(y, x) = v;
            s.gt_depth.valid[static_cast<std::size_t>(y) * width + x] = v > 0.0 ? 1 : 0;
        }
    return s;
}

std::vector<std::string> list_scene_dirs(const std::string& dataset_dir) {
    if (!fs::exists(dataset_dir)) {
        throw std::runtime_error("list_scene_dirs: no such directory '" + dataset_dir + "'");
    }
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(dataset_dir)) {
        if (e.is_directory() && e.path().filename().string().rfind("scene_", 0) == 0) {
            dirs.push_back(e.path().string());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

}  // namespace mvdepth
