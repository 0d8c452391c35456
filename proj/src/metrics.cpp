#include <algorithm>
#include <cmath>

#include <Eigen/QR>

#include "mgract/linalg.hpp"
#include "mgract/report.hpp"

namespace mgract {

namespace {

constexpr double kMinBpm = 40.0;
constexpr double kMaxBpm = 200.0;

Eigen::VectorXd time_axis(Eigen::Index n, double fps) {
  return Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1) / fps);
}

// Least-squares fit of signal on [1, t, cos(m w t), sin(m w t)] for m = 1..harmonics.
struct HarmonicFit {
  Eigen::VectorXd coef;
  double residual = 0;
};

HarmonicFit fit_harmonics(const Eigen::VectorXd& signal, const Eigen::VectorXd& t, double omega, int harmonics) {
  Eigen::MatrixXd a(signal.size(), 2 + 2 * harmonics);
  a.col(0).setOnes();
  a.col(1) = t;
  for (int m = 1; m <= harmonics; ++m) {
    a.col(2 * m) = (m * omega * t.array()).cos().matrix();
    a.col(2 * m + 1) = (m * omega * t.array()).sin().matrix();
  }
  HarmonicFit fit;
  fit.coef = a.colPivHouseholderQr().solve(signal);
  fit.residual = (a * fit.coef - signal).squaredNorm();
  return fit;
}

double refine_frequency(const Eigen::VectorXd& signal, const Eigen::VectorXd& t, double f0) {
  const double lo = std::max(kMinBpm / 60.0, f0 / 1.15);
  const double hi = std::min(kMaxBpm / 60.0, f0 * 1.15);
  auto cost = [&](double f) { return fit_harmonics(signal, t, 2.0 * kPi * f, 1).residual; };
  constexpr int kGrid = 64;
  double best_f = f0, best_c = cost(f0);
  for (int i = 0; i <= kGrid; ++i) {
    const double f = lo + (hi - lo) * i / kGrid;
    const double c = cost(f);
    if (c < best_c) {
      best_c = c;
      best_f = f;
    }
  }
  const double step = (hi - lo) / kGrid;
  double a = std::max(lo, best_f - step), b = std::min(hi, best_f + step);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double c1 = cost(x1), c2 = cost(x2);
  for (int it = 0; it < 60; ++it) {
    if (c1 < c2) {
      b = x2;
      x2 = x1;
      c2 = c1;
      x1 = b - g * (b - a);
      c1 = cost(x1);
    } else {
      a = x1;
      x1 = x2;
      c1 = c2;
      x2 = a + g * (b - a);
      c2 = cost(x2);
    }
  }
  const double f = 0.5 * (a + b);
  return cost(f) <= best_c ? f : best_f;
}

int joint(const SkeletonTopology& topo, const char* name) {
  const int j = topo.find(name);
  if (j < 0) throw ReportError(std::string("required joint '") + name + "' missing from topology");
  return j;
}

double angle_deg(const Vector2d& a, const Vector2d& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 180.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

Eigen::VectorXd moving_average(const Eigen::VectorXd& x, int width) {
  const int half = width / 2;
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Eigen::Index a = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index b = std::min<Eigen::Index>(x.size() - 1, i + half);
    out(i) = x.segment(a, b - a + 1).mean();
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double slope(const Eigen::VectorXd& y, const Eigen::VectorXd& t) {
  const double tm = t.mean();
  const double denom = (t.array() - tm).square().sum();
  if (denom == 0.0) return 0.0;
  return ((t.array() - tm) * (y.array() - y.mean())).sum() / denom;
}

}  // namespace

std::optional<double> estimate_rate(const Eigen::VectorXd& signal, double fps) {
  const Eigen::Index n = signal.size();
  if (n < 4 || !(fps > 0.0)) return std::nullopt;
  const Eigen::VectorXd t = time_axis(n, fps);
  const double b = slope(signal, t);
  const Eigen::VectorXd x = (signal.array() - signal.mean() - b * (t.array() - t.mean())).matrix();

  const auto lag_min = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::floor(fps * 60.0 / kMaxBpm)));
  const auto lag_max = std::min<Eigen::Index>(n - 2, static_cast<Eigen::Index>(std::ceil(fps * 60.0 / kMinBpm)));
  if (lag_max < lag_min) return std::nullopt;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(lag_max + 2);
  for (Eigen::Index lag = lag_min - 1; lag <= lag_max + 1 && lag < n; ++lag) {
    r(lag) = x.head(n - lag).dot(x.tail(n - lag)) / static_cast<double>(n);
  }
  Eigen::Index best = -1;
  for (Eigen::Index lag = lag_min; lag <= lag_max; ++lag) {
    if (r(lag) > 0.0 && r(lag) > r(lag - 1) && r(lag) >= r(lag + 1) && (best < 0 || r(lag) > r(best))) best = lag;
  }
  if (best < 0) return std::nullopt;
  double period = static_cast<double>(best);
  const double denom = r(best - 1) - 2.0 * r(best) + r(best + 1);
  if (denom < 0.0) period += 0.5 * (r(best - 1) - r(best + 1)) / denom;
  return 60.0 * refine_frequency(signal, t, fps / period);
}

KinematicMetrics extract_metrics(const NormalizedSequence& seq, std::optional<double> cm_per_unit) {
  const SkeletonTopology& topo = seq.pose.topology;
  const int ls = joint(topo, "left_shoulder"), rs = joint(topo, "right_shoulder");
  const int le = joint(topo, "left_elbow"), re = joint(topo, "right_elbow");
  const int lw = joint(topo, "left_wrist"), rw = joint(topo, "right_wrist");
  const int lh = joint(topo, "left_hip"), rh = joint(topo, "right_hip");
  if (cm_per_unit && !(*cm_per_unit > 0.0)) throw ReportError("cm-per-unit calibration must be positive");

  const int frames = seq.num_frames();
  const double fps = seq.pose.fps;
  auto pt = [&](int f, int j) { return Vector2d(seq.pose.at(f, j).x, seq.pose.at(f, j).y); };
  Eigen::VectorXd hand_y(frames), hand_x(frames);
  double elbow_sum = 0.0, tilt_sum = 0.0;
  for (int f = 0; f < frames; ++f) {
    // Hands are tracked in the camera frame: the patient's chest does not
    // move with the rescuer's hips, and the root joint's jitter stays out.
    const Vector2d root = seq.root_offset.cols() == frames ? Vector2d(seq.root_offset.col(f) / seq.scale) : Vector2d::Zero();
    hand_y(f) = 0.5 * (pt(f, lw).y() + pt(f, rw).y()) + root.y();
    hand_x(f) = 0.5 * (pt(f, lw).x() + pt(f, rw).x()) + root.x();
    elbow_sum += angle_deg(pt(f, ls) - pt(f, le), pt(f, lw) - pt(f, le));
    elbow_sum += angle_deg(pt(f, rs) - pt(f, re), pt(f, rw) - pt(f, re));
    const Vector2d axis = 0.5 * (pt(f, ls) + pt(f, rs)) - 0.5 * (pt(f, lh) + pt(f, rh));
    tilt_sum += std::atan2(std::abs(axis.x()), -axis.y()) * 180.0 / kPi;
  }

  KinematicMetrics m;
  m.elbow_angle_mean = elbow_sum / (2.0 * frames);
  m.torso_tilt = tilt_sum / frames;
  const Eigen::VectorXd t = time_axis(frames, fps);
  const std::optional<double> rate = estimate_rate(hand_y, fps);
  const double duration = static_cast<double>(frames - 1) / fps;
  if (!rate) {
    m.too_short = true;
    m.compression_rate = 0.0;
    m.depth_units = hand_y.maxCoeff() - hand_y.minCoeff();
    m.recoil_completeness = 1.0;
    m.hand_drift = std::abs(slope(hand_x, t)) * duration;
  } else {
    m.compression_rate = *rate;
    const double omega = 2.0 * kPi * *rate / 60.0;
    const HarmonicFit fit = fit_harmonics(hand_y, t, omega, 2);
    double lo = 0.0, hi = 0.0;
    constexpr int kSamples = 512;
    for (int i = 0; i < kSamples; ++i) {
      const double ph = 2.0 * kPi * i / kSamples;
      const double v = fit.coef(2) * std::cos(ph) + fit.coef(3) * std::sin(ph) + fit.coef(4) * std::cos(2 * ph) +
                       fit.coef(5) * std::sin(2 * ph);
      lo = i == 0 ? v : std::min(lo, v);
      hi = i == 0 ? v : std::max(hi, v);
    }
    m.depth_units = hi - lo;

    const double period_frames = fps * 60.0 / *rate;
    const int width = std::max(1, static_cast<int>(std::lround(period_frames / 5.0))) | 1;
    const Eigen::VectorXd smooth = moving_average(hand_y, width);
    const double baseline = smooth.minCoeff();
    const auto len = std::max<Eigen::Index>(2, std::lround(period_frames));
    std::vector<double> ratios;
    for (Eigen::Index start = 0; start + len <= smooth.size(); start += len) {
      const auto seg = smooth.segment(start, len);
      const double bottom = seg.maxCoeff();
      const double top = seg.minCoeff();
      ratios.push_back(bottom - baseline > 1e-12 ? (bottom - top) / (bottom - baseline) : 1.0);
    }
    m.recoil_completeness = ratios.empty() ? 1.0 : std::clamp(median(ratios), 0.0, 1.0);
    m.hand_drift = std::abs(slope(hand_x, t)) * 60.0 / *rate;
  }
  if (cm_per_unit) m.depth_cm = m.depth_units * *cm_per_unit;
  return m;
}

}  // namespace mgract
