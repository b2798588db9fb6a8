#include "mvdepth/geometry.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mvdepth {

Eigen::Matrix3d Intrinsics::matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

Eigen::Matrix3d Intrinsics::inverse() const {
    Eigen::Matrix3d ki;
    ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return ki;
}

bool Pose::is_valid_rotation(double tol) const {
    const Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::fabs(R.determinant() - 1.0) <= tol;
}

Eigen::Matrix4d Pose::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = R;
    m.block<3, 1>(0, 3) = t;
    return m;
}

DepthHypothesisSet build_hypotheses(double d_min, double d_max, int count) {
    if (!(d_min > 0.0) || !(d_min < d_max) || count < 2) {
        throw std::invalid_argument("build_hypotheses: need 0 < d_min < d_max and count >= 2");
    }
    DepthHypothesisSet set;
    set.d_min = d_min;
    set.d_max = d_max;
    set.values.resize(count);
    const double inv_min = 1.0 / d_max;
    const double inv_max = 1.0 / d_min;
    for (int i = 0; i < count; ++i) {
        // uniform in 1/d, ordered from d_min to d_max
        const double inv = inv_max + (inv_min - inv_max) * (static_cast<double>(i) / (count - 1));
        set.values[i] = 1.0 / inv;
    }
    set.values.front() = d_min;
    set.values.back() = d_max;
    return set;
}

Intrinsics scale_intrinsics(const Intrinsics& k, int factor) {
    if (factor < 1) throw std::invalid_argument("scale_intrinsics: factor must be >= 1");
    const double s = 1.0 / factor;
    return Intrinsics{k.fx * s, k.fy * s, k.cx * s, k.cy * s};
}

Eigen::Matrix3d plane_homography(const Intrinsics& k_ref, const Intrinsics& k_src,
                                 const Pose& p_ref, const Pose& p_src, double depth) {
    if (!(depth > 0.0)) throw std::invalid_argument("plane_homography: depth must be > 0");
    const Eigen::Matrix3d r_rel = p_src.R * p_ref.R.transpose();
    const Eigen::Vector3d t_rel = p_src.t - r_rel * p_ref.t;
    Eigen::Matrix3d plane = r_rel;
    plane.col(2) += t_rel / depth;  // R_rel + t_rel * n^T / d with n = e_z
    return k_src.matrix() * plane * k_ref.inverse();
}

WarpResult warp_features(const TensorPtr& src_feat, const Eigen::Matrix3d& h) {
    if (src_feat->shape.size() != 3) {
        throw std::invalid_argument("warp_features: expects src_feat [C,H,W]");
    }
    const int c = src_feat->shape[0];
    const int rows = src_feat->shape[1];
    const int cols = src_feat->shape[2];
    const std::int64_t hw = static_cast<std::int64_t>(rows) * cols;

    // Precompute bilinear taps per reference pixel; backward reuses them.
    struct Tap {
        std::int64_t idx[4];
        double w[4];
        int n = 0;
    };
    std::vector<Tap> taps(hw);
    std::vector<uint8_t> valid(hw, 0);

    for (int v = 0; v < rows; ++v) {
        for (int u = 0; u < cols; ++u) {
            const std::int64_t pix = static_cast<std::int64_t>(v) * cols + u;
            const Eigen::Vector3d q = h * Eigen::Vector3d(u, v, 1.0);
            if (!(q.z() > 1e-12)) continue;
            const double su = q.x() / q.z();
            const double sv = q.y() / q.z();
            if (su < 0.0 || su > cols - 1 || sv < 0.0 || sv > rows - 1) continue;
            valid[pix] = 1;
            const int x0 = static_cast<int>(std::floor(su));
            const int y0 = static_cast<int>(std::floor(sv));
            const double ax = su - x0;
            const double ay = sv - y0;
            auto& t = taps[pix];
            auto push = [&](int yy, int xx, double wgt) {
                if (wgt == 0.0 || xx < 0 || xx >= cols || yy < 0 || yy >= rows) return;
                t.idx[t.n] = static_cast<std::int64_t>(yy) * cols + xx;
                t.w[t.n] = wgt;
                ++t.n;
            };
            push(y0, x0, (1.0 - ax) * (1.0 - ay));
            push(y0, x0 + 1, ax * (1.0 - ay));
            push(y0 + 1, x0, (1.0 - ax) * ay);
            push(y0 + 1, x0 + 1, ax * ay);
        }
    }

    std::vector<double> out(static_cast<std::size_t>(c) * hw, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = src_feat->data.data() + static_cast<std::int64_t>(ch) * hw;
        double* op = out.data() + static_cast<std::int64_t>(ch) * hw;
        for (std::int64_t pix = 0; pix < hw; ++pix) {
            const auto& t = taps[pix];
            double acc = 0.0;
            for (int i = 0; i < t.n; ++i) acc += t.w[i] * plane[t.idx[i]];
            op[pix] = acc;
        }
    }

    auto src = src_feat;
    auto bwd = [src, taps, c, hw](const Tensor& self) {
        if (!src->track_grad) return;
        src->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            double* gp = src->grad.data() + static_cast<std::int64_t>(ch) * hw;
            const double* og = self.grad.data() + static_cast<std::int64_t>(ch) * hw;
            for (std::int64_t pix = 0; pix < hw; ++pix) {
                const auto& t = taps[pix];
                const double g = og[pix];
                if (g == 0.0) continue;
                for (int i = 0; i < t.n; ++i) gp[t.idx[i]] += t.w[i] * g;
            }
        }
    };
    WarpResult res;
    res.features = make_node({c, rows, cols}, std::move(out), {src_feat}, std::move(bwd), "warp");
    res.valid = std::move(valid);
    return res;
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega) {
    const double angle = omega.norm();
    if (angle < 1e-14) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Pose inject_pose_noise(const Pose& pose, double sigma_rot_deg, double sigma_trans_frac,
                       double baseline, Rng& rng) {
    if (sigma_rot_deg < 0.0 || sigma_trans_frac < 0.0) {
        throw std::invalid_argument("inject_pose_noise: sigmas must be >= 0");
    }
    if (sigma_rot_deg == 0.0 && sigma_trans_frac == 0.0) return pose;
    Pose out = pose;
    if (sigma_rot_deg > 0.0) {
        const double s = sigma_rot_deg * M_PI / 180.0;
        const Eigen::Vector3d omega(rng.normal(0.0, s), rng.normal(0.0, s), rng.normal(0.0, s));
        out.R = pose.R * rotation_exp(omega);
    }
    if (sigma_trans_frac > 0.0) {
        const double s = sigma_trans_frac * baseline;
        out.t += Eigen::Vector3d(rng.normal(0.0, s), rng.normal(0.0, s), rng.normal(0.0, s));
    }
    return out;
}

void save_camera_file(const std::string& path, const Intrinsics& k, const Pose& pose) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_camera_file: cannot open '" + path + "'");
    f << std::setprecision(17);
    const Eigen::Matrix3d km = k.matrix();
    for (int r = 0; r < 3; ++r) {
        f << km(r, 0) << ' ' << km(r, 1) << ' ' << km(r, 2) << '\n';
    }
    const Eigen::Matrix4d pm = pose.matrix();
    for (int r = 0; r < 4; ++r) {
        f << pm(r, 0) << ' ' << pm(r, 1) << ' ' << pm(r, 2) << ' ' << pm(r, 3) << '\n';
    }
    if (!f) throw std::runtime_error("save_camera_file: write failed for '" + path + "'");
}

void load_camera_file(const std::string& path, Intrinsics& k, Pose& pose) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_camera_file: cannot open '" + path + "'");
    double m[7][4] = {};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (!(f >> m[r][c])) {
                throw std::runtime_error("load_camera_file: truncated intrinsics in '" + path +
                                         "' at row " + std::to_string(r));
            }
    for (int r = 3; r < 7; ++r)
        for (int c = 0; c < 4; ++c)
            if (!(f >> m[r][c])) {
                throw std::runtime_error("load_camera_file: truncated pose in '" + path +
                                         "' at row " + std::to_string(r - 3));
            }
    if (m[0][0] <= 0.0 || m[1][1] <= 0.0) {
        throw std::runtime_error("load_camera_file: non-positive focal length in '" + path + "'");
    }
    k = Intrinsics{m[0][0], m[1][1], m[0][2], m[1][2]};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) pose.R(r, c) = m[3 + r][c];
        pose.t(r) = m[3 + r][3];
    }
    if (!pose.is_valid_rotation(1e-8)) {
        throw std::runtime_error("load_camera_file: rotation block is not orthonormal in '" +
                                 path + "'");
    }
}

}  // namespace mvdepth
