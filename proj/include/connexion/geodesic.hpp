#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include "connexion/connection.hpp"

namespace connexion {

/// Position, velocity and continued primitive K, all in the given chart.
struct GeodesicState {
    Chart chart = Chart::Standard;
    cplx z;
    cplx v;
    cplx k_phase;
};

/// State at a finite point of the standard chart, K on the principal branch.
GeodesicState make_state(const FuchsianConnection& conn, cplx z, cplx v);
GeodesicState make_state(const FuchsianConnection& conn, Chart chart, cplx x, cplx v);

/// Re-express a state in the other chart; c = v exp(K) is preserved.
GeodesicState to_chart(const GeodesicState& s, Chart chart);

cplx standard_position(const GeodesicState& s);
cplx standard_velocity(const GeodesicState& s);
inline cplx first_integral_of(const GeodesicState& s) { return s.v * std::exp(s.k_phase); }

struct TrajectorySample {
    double t;
    GeodesicState state;
    double s_g;
    cplx c;
};

enum class EventKind { ChartSwitch, PoleNeighborhoodEnter, PoleNeighborhoodExit, StepCollapse };

struct TraceEvent {
    double t;
    EventKind kind;
    int pole = -1;  // index into conn.poles() for neighborhood events
    Chart chart = Chart::Standard;
};

enum class Termination {
    TimeLimit,
    PoleApproach,
    StepCollapse,
    StepBudget,
    WallClock,
    RegionExit,
    NonFinite,
    Stopped,
};

const char* to_string(Termination t);

struct TraceOptions {
    double rtol = 1e-10;
    double atol = 1e-12;  // scaled by the distance to the nearest pole when below 1
    double integral_budget = 1e-11;  // per-step relative drift of v exp(K)
    double pole_floor = 1e-6;
    double switch_radius = 0;  // 0: use the connection's radius
    bool allow_switch = true;
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 0;   // 0: automatic
    std::size_t max_steps = 1000000;
    double wall_clock_s = 30.0;
    std::size_t sample_stride = 1;
    // optional disc in standard coordinates; leaving it ends the trace
    std::optional<std::pair<cplx, double>> region;
    std::function<bool(const TrajectorySample&)> stop;
};

/// A stretch of a trajectory known in closed form, e.g. a passage close to a
/// pole; eval takes the time since t0.
struct ClosedSegment {
    double t0, t1;
    int pole = -1;
    std::function<GeodesicState(double)> eval;
};

struct Trajectory {
    FuchsianConnection conn;
    TraceOptions opts;
    std::vector<TrajectorySample> samples;
    std::vector<TraceEvent> events;
    Termination reason = Termination::TimeLimit;
    int pole_hit = -1;  // index into conn.poles() when reason is PoleApproach/StepCollapse near a pole
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::vector<ClosedSegment> closed;  // sorted by t0, between samples of the same times

    double t_begin() const { return samples.front().t; }
    double t_end() const { return samples.back().t; }
};

Trajectory trace(const FuchsianConnection& conn, const GeodesicState& initial, double t_max,
                 const TraceOptions& opts = {});

struct FirstIntegral {
    cplx c;
    double max_relative_drift;
};

FirstIntegral first_integral(const Trajectory& traj);

/// State at time t, re-integrated from the nearest earlier sample.
GeodesicState state_at(const Trajectory& traj, double t);

/// Flat-metric length of the trajectory between two times, by quadrature.
double g_length(const Trajectory& traj, double t_a, double t_b);

struct IntersectionRecord {
    double t_i;
    double t_j;
    cplx point;
    bool transversal;
};

struct PolylineCrossing {
    std::size_t seg_i, seg_j;
    double u_i, u_j;  // position within each segment, in [0, 1]
    cplx point;
};

/// Proper crossings between non-adjacent segments of a polyline.
std::vector<PolylineCrossing> polyline_intersections(const std::vector<cplx>& pts,
                                                     std::size_t max_count);

std::vector<IntersectionRecord> self_intersections(const Trajectory& traj, std::size_t max_count);

/// Crossings between two different trajectories (standard coordinates, sampled polylines).
std::vector<PolylineCrossing> mutual_intersections(const std::vector<cplx>& a,
                                                   const std::vector<cplx>& b,
                                                   std::size_t max_count);

/// Time in [t_lo, t_hi] closest to target in the standard chart, by Newton from t0.
double closest_time(const Trajectory& traj, cplx target, double t_lo, double t_hi, double t0);

std::vector<cplx> standard_polyline(const Trajectory& traj);

/// K continued along a polyline in the standard chart.
std::vector<cplx> continue_K(const FuchsianConnection& conn, const std::vector<cplx>& path);

/// CSV with header t,re_z,im_z,re_v,im_v,s_g in standard coordinates.
void write_csv(std::ostream& os, const Trajectory& traj);

}  // namespace connexion
