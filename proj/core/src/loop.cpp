#include "rgbds/loop.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "rgbds/place_recognition.hpp"

namespace rgbds {

std::optional<LoopCandidate> detect_loop_candidate(
    const std::vector<KeyframePtr>& keyframes, int query_index,
    const RunConfig& cfg) {
  const int n = static_cast<int>(keyframes.size());
  if (n < 3 || query_index <= 0) return std::nullopt;
  const int last_candidate = query_index - cfg.loop_temporal_exclusion;
  if (last_candidate <= 0) return std::nullopt;

  const Keyframe& query = *keyframes[query_index];
  double best_score = -1.0;
  int best = -1;
  for (int i = 0; i < last_candidate; ++i) {
    const double s = place_similarity(query.place, keyframes[i]->place);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  if (best < 0) return std::nullopt;

  const double neighbor_score =
      place_similarity(query.place, keyframes[query_index - 1]->place);
  const double ratio = best_score / std::max(neighbor_score, 1e-6);
  if (ratio <= cfg.loop_ratio) return std::nullopt;

  LoopCandidate cand;
  cand.query_id = keyframes[query_index]->id;
  cand.match_id = keyframes[best]->id;
  cand.appearance_score = best_score;
  return cand;
}

Pose horn_align(const std::vector<Eigen::Vector3d>& a,
                const std::vector<Eigen::Vector3d>& b) {
  if (a.size() != b.size() || a.size() < 3) {
    throw std::invalid_argument("horn alignment needs >= 3 correspondences");
  }
  const size_t n = a.size();
  Eigen::Vector3d ca = Eigen::Vector3d::Zero();
  Eigen::Vector3d cb = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= static_cast<double>(n);
  cb /= static_cast<double>(n);

  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter_a = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d pa = a[i] - ca;
    const Eigen::Vector3d pb = b[i] - cb;
    S += pa * pb.transpose();
    scatter_a += pa * pa.transpose();
  }

  // Collinear inputs leave the rotation about the line unconstrained.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> scatter_eig(scatter_a);
  const Eigen::Vector3d ev = scatter_eig.eigenvalues();  // ascending
  if (ev(1) <= 1e-10 * std::max(ev(2), 1e-12)) {
    throw std::invalid_argument("horn alignment input is collinear");
  }

  // Horn's quaternion form: the rotation is the eigenvector of N with the
  // largest eigenvalue.
  Eigen::Matrix4d N;
  const double sxx = S(0, 0), sxy = S(0, 1), sxz = S(0, 2);
  const double syx = S(1, 0), syy = S(1, 1), syz = S(1, 2);
  const double szx = S(2, 0), szy = S(2, 1), szz = S(2, 2);
  // clang-format off
  N << sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
       syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
       szx - sxz,       sxy + syx,       -sxx + syy - szz,  syz + szy,
       sxy - syx,       szx + sxz,        syz + szy,       -sxx - syy + szz;
  // clang-format on
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(N);
  Eigen::Vector4d q = eig.eigenvectors().col(3);  // largest eigenvalue
  const Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
  const Eigen::Matrix3d R = quat.normalized().toRotationMatrix();
  return Pose(R, cb - R * ca);
}

LoopCandidate verify_and_align(const LoopCandidate& candidate,
                               const Keyframe& query, const Keyframe& match,
                               const RunConfig& cfg, std::mt19937_64& rng) {
  LoopCandidate out = candidate;
  out.inliers = 0;
  out.accepted = false;

  const auto matches = match_keypoints(query.place.keypoints,
                                       match.place.keypoints,
                                       cfg.loop_max_hamming);
  if (matches.size() < 3) return out;

  const int finest = query.pyramid.finest();
  const PinholeIntrinsics& intr_q = query.pyramid.intrinsics[finest];
  const PinholeIntrinsics& intr_m = match.pyramid.intrinsics[finest];

  std::vector<Eigen::Vector3d> pts_q, pts_m;
  std::vector<Eigen::Vector2d> px_q;
  pts_q.reserve(matches.size());
  pts_m.reserve(matches.size());
  for (const auto& [qi, mi] : matches) {
    const auto& kq = query.place.keypoints[qi];
    const auto& km = match.place.keypoints[mi];
    pts_q.push_back(
        backproject(kq.px.cast<double>(), 1.0 / kq.depth, intr_q));
    pts_m.push_back(
        backproject(km.px.cast<double>(), 1.0 / km.depth, intr_m));
    px_q.emplace_back(kq.px.cast<double>());
  }
  const int n = static_cast<int>(pts_q.size());

  // Keypoints live at the finest pyramid level; the threshold doubles per
  // coarser level.
  const double threshold = cfg.loop_inlier_px;

  const auto count_inliers = [&](const Pose& T,
                                 std::vector<int>* inlier_set) -> int {
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const auto px = project(T * pts_m[i], intr_q);
      if (!px) continue;
      if ((*px - px_q[i]).norm() < threshold) {
        ++count;
        if (inlier_set) inlier_set->push_back(i);
      }
    }
    return count;
  };

  std::uniform_int_distribution<int> pick(0, n - 1);
  Pose best_T;
  int best_inliers = 0;
  int max_iters = cfg.loop_ransac_max_iters;
  for (int iter = 0; iter < max_iters; ++iter) {
    int i0 = pick(rng), i1 = pick(rng), i2 = pick(rng);
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    Pose T;
    try {
      T = horn_align({pts_m[i0], pts_m[i1], pts_m[i2]},
                     {pts_q[i0], pts_q[i1], pts_q[i2]});
    } catch (const std::invalid_argument&) {
      continue;
    }
    const int inliers = count_inliers(T, nullptr);
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best_T = T;
      const double w = static_cast<double>(inliers) / n;
      const double denom = std::log(1.0 - std::min(0.999999, w * w * w));
      if (denom < 0.0) {
        const int needed = static_cast<int>(
            std::ceil(std::log(1.0 - cfg.loop_ransac_confidence) / denom));
        max_iters = std::min(max_iters, std::max(iter + 1, needed));
      }
    }
  }
  if (best_inliers < 3) return out;

  std::vector<int> inlier_set;
  count_inliers(best_T, &inlier_set);
  if (inlier_set.size() >= 3) {
    std::vector<Eigen::Vector3d> am, aq;
    for (int i : inlier_set) {
      am.push_back(pts_m[i]);
      aq.push_back(pts_q[i]);
    }
    try {
      const Pose refined = horn_align(am, aq);
      if (count_inliers(refined, nullptr) >= best_inliers) {
        best_T = refined;
      }
    } catch (const std::invalid_argument&) {
    }
  }
  out.inliers = count_inliers(best_T, nullptr);
  out.T_query_match = best_T;
  out.accepted = out.inliers >= cfg.loop_min_inliers;
  return out;
}

ReuseDecision map_reuse_decision(const Frame& frame, const Pose& tracked_pose,
                                 const std::vector<KeyframePtr>& keyframes,
                                 const std::vector<Pose>& current_poses,
                                 const std::vector<int>& candidate_indices,
                                 const RunConfig& cfg) {
  ReuseDecision decision;
  if (candidate_indices.empty()) return decision;

  const int finest = frame.pyramid.finest();
  const GrayImage& gray_f = frame.pyramid.gray[finest];
  const DepthImage& inv_f = frame.pyramid.inv_depth[finest];
  const PinholeIntrinsics& intr = frame.pyramid.intrinsics[finest];
  const double geo_scale = sigma_inverse_depth(intr);

  int best_candidate = -1;
  int oldest_survivor = -1;
  for (const int idx : candidate_indices) {
    const Keyframe& kf = *keyframes[idx];
    const Pose T_f_k = tracked_pose.inverse() * current_poses[idx];

    size_t total = 0;
    size_t visible = 0;
    std::vector<float> ph_err, geo_err;
    for (const MapPoint& mp : kf.photometric[kf.pyramid.finest()]) {
      ++total;
      const Eigen::Vector3d p_f = T_f_k * mp.p_cam;
      const auto uv = project(p_f, intr);
      if (!uv || uv->x() < 0.0 || uv->y() < 0.0 ||
          uv->x() > gray_f.width - 1 || uv->y() > gray_f.height - 1) {
        continue;
      }
      ++visible;
      ph_err.push_back(std::abs(
          static_cast<float>(mp.intensity) -
          sample_bilinear(gray_f, uv->x(), uv->y())));
      const int xi = static_cast<int>(std::lround(uv->x()));
      const int yi = static_cast<int>(std::lround(uv->y()));
      if (inv_f.in_bounds(xi, yi) && inv_f.at(xi, yi) > 0.0f) {
        geo_err.push_back(std::abs(static_cast<float>(1.0 / p_f.z()) -
                                   inv_f.at(xi, yi)));
      }
    }
    if (best_candidate < 0) best_candidate = idx;
    if (total == 0) continue;
    const double overlap = static_cast<double>(visible) / total;
    if (overlap < cfg.loop_reuse_overlap) continue;
    if (ph_err.empty() || geo_err.empty()) continue;

    const auto median = [](std::vector<float>& v) {
      const size_t mid = v.size() / 2;
      std::nth_element(v.begin(), v.begin() + mid, v.end());
      return static_cast<double>(v[mid]);
    };
    if (median(ph_err) >= cfg.loop_reuse_nsigma * cfg.loop_reuse_sigma_ph) {
      continue;
    }
    if (median(geo_err) >= cfg.loop_reuse_nsigma * geo_scale) continue;

    if (oldest_survivor < 0 ||
        keyframes[idx]->id < keyframes[oldest_survivor]->id) {
      oldest_survivor = idx;
    }
  }

  if (oldest_survivor >= 0) {
    decision.action = ReuseAction::kReuse;
    decision.keyframe_id = keyframes[oldest_survivor]->id;
  } else if (best_candidate >= 0) {
    decision.action = ReuseAction::kCloseLoop;
    decision.keyframe_id = keyframes[best_candidate]->id;
  }
  return decision;
}

}  // namespace rgbds
