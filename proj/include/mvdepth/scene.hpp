#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvdepth/geometry.hpp"
#include "mvdepth/image_io.hpp"
#include "mvdepth/maps.hpp"

namespace mvdepth {

struct SceneConfig {
    int width = 32;
    int height = 32;
    int channels = 1;  // grayscale by default; 3 supported
    int n_frames = 3;
    double d_min = 2.5;
    double d_max = 10.0;
    double baseline = 0.8;  // lateral camera translation per frame step, meters
    int min_objects = 1;
    int max_objects = 5;
    double texture_level = -1.0;  // in [0,1]; negative means: sample per scene
    double dynamic_probability = 0.3;
    double dynamic_speed_min = 0.10;  // meters per frame step
    double dynamic_speed_max = 0.30;
    std::uint64_t seed = 1;
};

// One synchronized multi-view sample. Frame images are snapped to float32
// values at generation so they survive PFM storage unchanged; gt_depth keeps
// full double precision (the file copy is float32).
struct SceneSample {
    std::vector<FloatImage> frames;
    std::vector<Intrinsics> intrinsics;
    std::vector<Pose> poses;  // world-to-camera
    int reference = 0;
    DepthMap gt_depth;  // reference frame
    double texture_level = 0.0;
    bool has_dynamic_object = false;
    std::uint64_t seed = 0;
    double baseline = 0.0;
};

// Analytic scene: ground plane + back wall + 1..5 boxes/spheres, value-noise
// albedo, one fixed directional light. Kept public so tests can build
// hand-crafted scenes and query exact intersections.
struct ScenePrimitive {
    enum class Kind { kPlane, kBox, kSphere };
    Kind kind = Kind::kPlane;
    // plane: n . x = offset
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    double offset = 0.0;
    // box: axis-aligned corners
    Eigen::Vector3d box_min = Eigen::Vector3d::Zero();
    Eigen::Vector3d box_max = Eigen::Vector3d::Zero();
    // sphere
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 0.0;

    double albedo_base = 0.5;
    double noise_scale = 2.0;  // texture lattice cells per meter
};

struct SceneGeometry {
    std::vector<ScenePrimitive> primitives;
    Eigen::Vector3d light_dir = Eigen::Vector3d(-0.45, -0.75, -0.5).normalized();
    double texture_level = 0.5;
    std::uint64_t texture_seed = 0;
    int dynamic_index = -1;  // primitive that moves between frames, -1 if none
    Eigen::Vector3d dynamic_velocity = Eigen::Vector3d::Zero();
};

struct RayHit {
    double depth = 0.0;  // ray parameter == z-depth when cast through make_ray
    int primitive = -1;
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
};

// Nearest intersection along origin + s*dir for s > 1e-9. `frame_offset`
// shifts the dynamic primitive by velocity * frame_offset.
std::optional<RayHit> cast_ray(const SceneGeometry& geom, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir, int frame_offset);

FloatImage render_frame(const SceneGeometry& geom, const SceneConfig& cfg, const Intrinsics& k,
                        const Pose& pose, int frame_offset);
DepthMap render_depth(const SceneGeometry& geom, const SceneConfig& cfg, const Intrinsics& k,
                      const Pose& pose, int frame_offset);
// Reference-frame pixels whose ray hits the dynamic primitive in the
// reference frame (all zero when the scene is static).
std::vector<uint8_t> dynamic_pixel_mask(const SceneGeometry& geom, const SceneConfig& cfg,
                                        const Intrinsics& k, const Pose& pose);

SceneGeometry build_scene_geometry(const SceneConfig& cfg, std::uint64_t seed);

// Deterministic from (cfg, seed); retries with derived sub-seeds when the
// geometry leaves uncovered pixels, erroring after 10 attempts.
SceneSample generate_scene(const SceneConfig& cfg, std::uint64_t seed);

// Photometric consistency of a rendered sample: warp each reference pixel
// through its gt depth into `src_frame`, sample bilinearly, and average the
// absolute intensity difference over non-occluded in-view pixels. Occlusion
// is tested against the source frame's own rendered depth.
struct ReprojectionReport {
    double mean_error_static = 0.0;   // over non-occluded pixels off the dynamic object
    double mean_error_dynamic = 0.0;  // over dynamic-object pixels (0 when none)
    std::int64_t n_static = 0;
    std::int64_t n_dynamic = 0;
};
ReprojectionReport reprojection_check(const SceneGeometry& geom, const SceneConfig& cfg,
                                      const SceneSample& sample, int src_frame);

// Dataset layout: scene_%05d/frame_%d.pfm, frame_%d.cam, gt_depth.pfm,
// meta.txt, plus a root manifest.txt.
void make_dataset(const SceneConfig& cfg, int n_scenes, const std::string& out_dir);
SceneSample load_sample(const std::string& scene_dir);
std::vector<std::string> list_scene_dirs(const std::string& dataset_dir);

}  // namespace mvdepth
