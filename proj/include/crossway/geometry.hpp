// Intersection geometry: the four-approach layout, the 12 entrance->exit
// vehicle paths, the signed center-distance coordinate along each path, and
// pairwise conflict classification (crossing / converging / diverging).
//
// Coordinate frame: intersection center at the origin, x east, y north.
// Right-hand traffic, one lane per direction per road. Approaches are named
// by their map position: D enters from the south heading north, R from the
// east heading west, L from the west heading east, U from the north heading
// south. A vehicle's progress coordinate d is the arc distance to its path's
// center point, positive while approaching and negative after passing it.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crossway {

inline constexpr double kPi = 3.14159265358979323846;

// The 12 entrance->exit movements, numbered as listed in the movement table.
enum class VehicleType : int {
  DR = 1,
  DU = 2,
  DL = 3,
  RU = 4,
  RL = 5,
  RD = 6,
  LD = 7,
  LR = 8,
  LU = 9,
  UL = 10,
  UD = 11,
  UR = 12,
};

inline constexpr std::array<VehicleType, 12> kAllVehicleTypes = {
    VehicleType::DR, VehicleType::DU, VehicleType::DL, VehicleType::RU,
    VehicleType::RL, VehicleType::RD, VehicleType::LD, VehicleType::LR,
    VehicleType::LU, VehicleType::UL, VehicleType::UD, VehicleType::UR};

// The 8-vehicle experiment subset; this is also the state concatenation
// order (ascending type number).
inline constexpr std::array<VehicleType, 8> kExperimentModes = {
    VehicleType::DR, VehicleType::DL, VehicleType::RU, VehicleType::RL,
    VehicleType::LD, VehicleType::LU, VehicleType::UL, VehicleType::UD};

enum class Approach : int { D = 0, R = 1, U = 2, L = 3 };

enum class Maneuver { Right, Straight, Left };

inline const char* to_string(VehicleType t) {
  switch (t) {
    case VehicleType::DR: return "DR";
    case VehicleType::DU: return "DU";
    case VehicleType::DL: return "DL";
    case VehicleType::RU: return "RU";
    case VehicleType::RL: return "RL";
    case VehicleType::RD: return "RD";
    case VehicleType::LD: return "LD";
    case VehicleType::LR: return "LR";
    case VehicleType::LU: return "LU";
    case VehicleType::UL: return "UL";
    case VehicleType::UD: return "UD";
    case VehicleType::UR: return "UR";
  }
  return "??";
}

inline const char* to_string(Approach a) {
  switch (a) {
    case Approach::D: return "D";
    case Approach::R: return "R";
    case Approach::U: return "U";
    case Approach::L: return "L";
  }
  return "?";
}

inline std::optional<VehicleType> vehicle_type_from_string(const std::string& s) {
  for (VehicleType t : kAllVehicleTypes) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

inline Approach entrance_of(VehicleType t) {
  switch (to_string(t)[0]) {
    case 'D': return Approach::D;
    case 'R': return Approach::R;
    case 'L': return Approach::L;
    default: return Approach::U;
  }
}

inline Approach exit_of(VehicleType t) {
  switch (to_string(t)[1]) {
    case 'D': return Approach::D;
    case 'R': return Approach::R;
    case 'L': return Approach::L;
    default: return Approach::U;
  }
}

// With right-hand traffic the (entrance, exit) pair fixes the maneuver:
// each entrance has exactly one right turn, one straight, one left turn.
inline Maneuver maneuver_of(VehicleType t) {
  switch (t) {
    case VehicleType::DR:
    case VehicleType::RU:
    case VehicleType::LD:
    case VehicleType::UL:
      return Maneuver::Right;
    case VehicleType::DU:
    case VehicleType::RL:
    case VehicleType::LR:
    case VehicleType::UD:
      return Maneuver::Straight;
    default:
      return Maneuver::Left;
  }
}

// All lengths in meters, angles in radians.
struct IntersectionLayout {
  double zone_radius = 50.0;        // control zone extent along each approach
  double lane_width = 3.75;
  double right_turn_radius = 1.875; // lane_width / 2: inner joining arc
  double left_turn_radius = 5.625;  // 3 * lane_width / 2: outer joining arc
  double sample_resolution = 0.1;   // centerline sample spacing
};

struct PathSample {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // unwrapped tangent angle, continuous along the path
};

// A path is a straight approach leg, an interior segment (straight chord or
// circular arc), and a straight departure leg. Poses are evaluated exactly
// from the segment description; the sampled centerline is kept for grid
// searches and for oracle-style tests.
class Path {
 public:
  struct Segment {
    bool is_arc = false;
    double length = 0.0;
    // straight: start pose and exact unit direction (axis-aligned lanes)
    double x0 = 0.0, y0 = 0.0, heading0 = 0.0, dx = 1.0, dy = 0.0;
    // arc: center, radius, start angle (center->point), signed sweep direction
    double cx = 0.0, cy = 0.0, radius = 0.0, ang0 = 0.0, sweep_sign = 1.0;
  };

  VehicleType vehicle_type = VehicleType::DR;
  double total_length = 0.0;
  double center_offset = 0.0;  // arc length from zone entry to the center point
  double sample_resolution = 0.1;
  std::vector<Segment> segments;
  std::vector<PathSample> sampled_centerline;

  // Exact pose at arc progress p in [0, total_length].
  PathSample pose_at_progress(double p) const {
    if (p < -1e-9 || p > total_length + 1e-9) {
      throw std::out_of_range("Path::pose_at_progress: progress " +
                              std::to_string(p) + " outside [0, " +
                              std::to_string(total_length) + "]");
    }
    p = std::clamp(p, 0.0, total_length);
    double s = p;
    for (const Segment& seg : segments) {
      if (s <= seg.length || &seg == &segments.back()) {
        return segment_pose(seg, std::min(s, seg.length));
      }
      s -= seg.length;
    }
    return segment_pose(segments.back(), segments.back().length);
  }

  void build_samples() {
    sampled_centerline.clear();
    const std::size_t n =
        static_cast<std::size_t>(std::floor(total_length / sample_resolution + 1e-9));
    sampled_centerline.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      sampled_centerline.push_back(
          pose_at_progress(static_cast<double>(i) * sample_resolution));
    }
  }

 private:
  static PathSample segment_pose(const Segment& seg, double s) {
    PathSample out;
    if (!seg.is_arc) {
      out.x = seg.x0 + s * seg.dx;
      out.y = seg.y0 + s * seg.dy;
      out.heading = seg.heading0;
    } else {
      const double dth = seg.sweep_sign * s / seg.radius;
      const double ang = seg.ang0 + dth;
      out.x = seg.cx + seg.radius * std::cos(ang);
      out.y = seg.cy + seg.radius * std::sin(ang);
      out.heading = ang + seg.sweep_sign * kPi / 2.0;
    }
    return out;
  }
};

enum class ConflictKind { Crossing, Converging, Diverging, None };

inline const char* to_string(ConflictKind k) {
  switch (k) {
    case ConflictKind::Crossing: return "crossing";
    case ConflictKind::Converging: return "converging";
    case ConflictKind::Diverging: return "diverging";
    case ConflictKind::None: return "none";
  }
  return "?";
}

struct ConflictRelation {
  VehicleType a;
  VehicleType b;
  ConflictKind kind = ConflictKind::None;
  // Arc-progress pair at minimum inter-centerline distance, present for
  // crossing and converging pairs.
  std::optional<std::pair<double, double>> conflict_arc_positions;
};

class PathSet {
 public:
  IntersectionLayout layout;
  std::array<Path, 12> paths;

  const Path& of(VehicleType t) const {
    return paths[static_cast<std::size_t>(static_cast<int>(t) - 1)];
  }
};

namespace detail {

// Entrances sit at multiples of 90 degrees; snapping trig values keeps the
// axis-aligned lane coordinates exact.
inline double snap_trig(double v) {
  if (std::abs(v) < 1e-12) return 0.0;
  if (std::abs(v - 1.0) < 1e-12) return 1.0;
  if (std::abs(v + 1.0) < 1e-12) return -1.0;
  return v;
}

inline Path::Segment rotate_segment(Path::Segment seg, double theta) {
  const double c = snap_trig(std::cos(theta));
  const double s = snap_trig(std::sin(theta));
  auto rot = [&](double& x, double& y) {
    const double nx = c * x - s * y;
    const double ny = s * x + c * y;
    x = nx;
    y = ny;
  };
  rot(seg.x0, seg.y0);
  rot(seg.cx, seg.cy);
  rot(seg.dx, seg.dy);
  seg.heading0 += theta;
  seg.ang0 += theta;
  return seg;
}

// Segments for a D-entrance (south, heading north) path of the given
// maneuver. Other entrances are quarter-turn rotations of these.
inline std::vector<Path::Segment> base_segments(const IntersectionLayout& lay,
                                                Maneuver m) {
  const double r_zone = lay.zone_radius;
  const double half_lane = lay.lane_width / 2.0;
  std::vector<Path::Segment> segs;

  auto straight = [](double x0, double y0, double heading, double length) {
    Path::Segment s;
    s.is_arc = false;
    s.x0 = x0;
    s.y0 = y0;
    s.heading0 = heading;
    s.dx = snap_trig(std::cos(heading));
    s.dy = snap_trig(std::sin(heading));
    s.length = length;
    return s;
  };

  if (m == Maneuver::Straight) {
    segs.push_back(straight(half_lane, -r_zone, kPi / 2.0, 2.0 * r_zone));
    return segs;
  }

  if (m == Maneuver::Right) {
    const double r = lay.right_turn_radius;
    const double leg = r_zone - half_lane - r;
    if (leg <= 0.0) {
      throw std::invalid_argument(
          "IntersectionLayout: right_turn_radius infeasible for lane offsets "
          "(requires right_turn_radius < zone_radius - lane_width/2)");
    }
    segs.push_back(straight(half_lane, -r_zone, kPi / 2.0, leg));
    Path::Segment arc;
    arc.is_arc = true;
    arc.radius = r;
    arc.cx = half_lane + r;
    arc.cy = -half_lane - r;
    arc.ang0 = kPi;           // center->start points west
    arc.sweep_sign = -1.0;    // clockwise: heading pi/2 -> 0
    arc.length = r * kPi / 2.0;
    segs.push_back(arc);
    segs.push_back(straight(half_lane + r, -half_lane, 0.0, leg));
    return segs;
  }

  // Left turn.
  const double r = lay.left_turn_radius;
  const double leg = r_zone + half_lane - r;
  if (leg <= 0.0) {
    throw std::invalid_argument(
        "IntersectionLayout: left_turn_radius infeasible for lane offsets "
        "(requires left_turn_radius < zone_radius + lane_width/2)");
  }
  segs.push_back(straight(half_lane, -r_zone, kPi / 2.0, leg));
  Path::Segment arc;
  arc.is_arc = true;
  arc.radius = r;
  arc.cx = half_lane - r;
  arc.cy = half_lane - r;
  arc.ang0 = 0.0;           // center->start points east
  arc.sweep_sign = 1.0;     // counterclockwise: heading pi/2 -> pi
  arc.length = r * kPi / 2.0;
  segs.push_back(arc);
  segs.push_back(straight(half_lane - r, half_lane, kPi, leg));
  return segs;
}

inline double entrance_rotation(Approach a) {
  switch (a) {
    case Approach::D: return 0.0;
    case Approach::R: return kPi / 2.0;
    case Approach::U: return kPi;
    case Approach::L: return -kPi / 2.0;
  }
  return 0.0;
}

}  // namespace detail

inline PathSet build_paths(const IntersectionLayout& layout) {
  if (layout.zone_radius <= 0.0 || layout.lane_width <= 0.0 ||
      layout.right_turn_radius <= 0.0 || layout.left_turn_radius <= 0.0) {
    throw std::invalid_argument(
        "IntersectionLayout: zone_radius, lane_width and turn radii must be positive");
  }
  if (layout.sample_resolution <= 0.0 || layout.sample_resolution > 1.0) {
    throw std::invalid_argument(
        "IntersectionLayout: sample_resolution must be in (0, 1]");
  }

  PathSet set;
  set.layout = layout;
  for (VehicleType t : kAllVehicleTypes) {
    Path path;
    path.vehicle_type = t;
    path.sample_resolution = layout.sample_resolution;
    const double theta = detail::entrance_rotation(entrance_of(t));
    for (const Path::Segment& seg : detail::base_segments(layout, maneuver_of(t))) {
      path.segments.push_back(detail::rotate_segment(seg, theta));
      path.total_length += seg.length;
    }
    path.center_offset = path.total_length / 2.0;  // center point = midpoint
    path.build_samples();
    set.paths[static_cast<std::size_t>(static_cast<int>(t) - 1)] = std::move(path);
  }
  return set;
}

// Pose at signed center distance d (positive approaching, negative leaving).
// Valid range: center_offset - total_length <= d <= center_offset.
inline PathSample path_position(const Path& path, double d) {
  const double p = path.center_offset - d;
  if (p < -1e-9 || p > path.total_length + 1e-9) {
    throw std::out_of_range("path_position: d=" + std::to_string(d) +
                            " is off the " + to_string(path.vehicle_type) +
                            " path");
  }
  return path.pose_at_progress(p);
}

namespace detail {

inline double pose_dist(const PathSample& a, const PathSample& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::hypot(dx, dy);
}

struct MinDistResult {
  double dist = 0.0;
  double pa = 0.0;
  double pb = 0.0;
};

// Grid search over the sampled centerlines, tie-broken toward the earliest
// progress pair, then local coordinate descent on the exact curves.
inline MinDistResult min_centerline_distance(const Path& a, const Path& b) {
  const double res_a = a.sample_resolution, res_b = b.sample_resolution;
  MinDistResult best;
  best.dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.sampled_centerline.size(); ++i) {
    for (std::size_t j = 0; j < b.sampled_centerline.size(); ++j) {
      const double dist =
          pose_dist(a.sampled_centerline[i], b.sampled_centerline[j]);
      if (dist < best.dist - 1e-9) {
        best.dist = dist;
        best.pa = static_cast<double>(i) * res_a;
        best.pb = static_cast<double>(j) * res_b;
      }
    }
  }

  double step = std::max(res_a, res_b) / 2.0;
  while (step > 1e-7) {
    const std::array<std::pair<double, double>, 4> moves = {
        {{step, 0.0}, {-step, 0.0}, {0.0, step}, {0.0, -step}}};
    bool improved = true;
    while (improved) {
      improved = false;
      for (const auto& [dpa, dpb] : moves) {
        const double pa = std::clamp(best.pa + dpa, 0.0, a.total_length);
        const double pb = std::clamp(best.pb + dpb, 0.0, b.total_length);
        const double dist =
            pose_dist(a.pose_at_progress(pa), b.pose_at_progress(pb));
        if (dist < best.dist - 1e-15) {
          best.dist = dist;
          best.pa = pa;
          best.pb = pb;
          improved = true;
        }
      }
    }
    step /= 2.0;
  }
  return best;
}

}  // namespace detail

inline ConflictRelation classify_conflict(VehicleType a, VehicleType b,
                                          const PathSet& paths) {
  if (a == b) {
    throw std::invalid_argument("classify_conflict: identical vehicle types");
  }
  // Canonicalize so classify(a,b) and classify(b,a) are exact mirrors.
  if (static_cast<int>(a) > static_cast<int>(b)) {
    ConflictRelation swapped = classify_conflict(b, a, paths);
    std::swap(swapped.a, swapped.b);
    if (swapped.conflict_arc_positions) {
      std::swap(swapped.conflict_arc_positions->first,
                swapped.conflict_arc_positions->second);
    }
    return swapped;
  }

  ConflictRelation rel;
  rel.a = a;
  rel.b = b;
  if (entrance_of(a) == entrance_of(b)) {
    rel.kind = ConflictKind::Diverging;
    return rel;
  }
  const auto min_dist = detail::min_centerline_distance(paths.of(a), paths.of(b));
  if (exit_of(a) == exit_of(b)) {
    rel.kind = ConflictKind::Converging;
    rel.conflict_arc_positions = {min_dist.pa, min_dist.pb};
    return rel;
  }
  // Centerlines closer than a lane width imply overlapping swept areas.
  // The small slack keeps exactly-one-lane-apart movements out of the
  // crossing class under floating point refinement.
  if (min_dist.dist < paths.layout.lane_width - 1e-6) {
    rel.kind = ConflictKind::Crossing;
    rel.conflict_arc_positions = {min_dist.pa, min_dist.pb};
  } else {
    rel.kind = ConflictKind::None;
  }
  return rel;
}

}  // namespace crossway
