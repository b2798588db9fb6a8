#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mvdepth/rng.hpp"
#include "mvdepth/tensor.hpp"

namespace mvdepth {

struct Intrinsics {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;

    Eigen::Matrix3d matrix() const;
    Eigen::Matrix3d inverse() const;
};

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    // RtR = I and det(R) = 1, both within tol.
    bool is_valid_rotation(double tol = 1e-10) const;
    Eigen::Matrix4d matrix() const;
};

// Depth hypotheses spaced uniformly in inverse depth.
struct DepthHypothesisSet {
    std::vector<double> values;  // strictly increasing, values[0]=d_min, back()=d_max
    double d_min = 0.0;
    double d_max = 0.0;
};

DepthHypothesisSet build_hypotheses(double d_min, double d_max, int count);

// Intrinsics for a feature grid downsampled by `factor`: index 0 of the
// coarse grid is aligned with full-res index 0 (stride-conv convention).
Intrinsics scale_intrinsics(const Intrinsics& k, int factor);

// Homography mapping reference pixels to source pixels for the
// fronto-parallel plane z = d in the reference camera frame:
//   H = K_src * (R_rel + t_rel * n^T / d) * K_ref^-1,  n = (0,0,1)^T,
// with R_rel = R_src * R_ref^T and t_rel = t_src - R_rel * t_ref.
Eigen::Matrix3d plane_homography(const Intrinsics& k_ref, const Intrinsics& k_src,
                                 const Pose& p_ref, const Pose& p_src, double depth);

struct WarpResult {
    TensorPtr features;           // [C,H,W], zero where invalid
    std::vector<uint8_t> valid;   // H*W, true where the sample fell inside the source
};

// Bilinear warp of source features into the reference grid under H.
// Samples outside [0,W-1]x[0,H-1] (or behind the camera) produce zero
// features and valid=false. Differentiable w.r.t. src_feat only.
WarpResult warp_features(const TensorPtr& src_feat, const Eigen::Matrix3d& h);

// Perturbs a pose: R <- R * exp([w]x) with w ~ N(0, (sigma_rot_deg in rad)^2 I),
// t <- t + e with e ~ N(0, (sigma_trans_frac * baseline)^2 I). The exponential
// map keeps the output exactly in the rotation group.
Pose inject_pose_noise(const Pose& pose, double sigma_rot_deg, double sigma_trans_frac,
                       double baseline, Rng& rng);

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega);

// Camera text file: 3 rows of the 3x3 intrinsic matrix then 4 rows of the
// 4x4 world-to-camera matrix, whitespace separated, full double precision.
void save_camera_file(const std::string& path, const Intrinsics& k, const Pose& pose);
void load_camera_file(const std::string& path, Intrinsics& k, Pose& pose);

}  // namespace mvdepth
