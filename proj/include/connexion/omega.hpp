#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "connexion/connection.hpp"
#include "connexion/geodesic.hpp"

namespace connexion {

/// Argument of the first integral, compared modulo the subgroup of the circle
/// generated by 2 pi rho_j.
struct DirectionClass {
    double angle = 0;                // arg c in [0, 2pi)
    std::vector<double> generators;  // nontrivial 2 pi rho_j reduced into [0, 2pi)
    bool same_as(const DirectionClass& o, double tol = 1e-9, bool unoriented = false) const;
};

DirectionClass direction_class(const FuchsianConnection& conn, cplx c);

/// Crossings of a trajectory with a short geodesic segment, parametrised by
/// signed g-length from its centre.
struct TransversalSection {
    std::vector<cplx> base;       // standard-chart polyline
    std::vector<double> base_s;   // g-length parameter at each base point
    double delta = 0;             // parameter range [-delta, delta]
    double resolution = 0;        // crossings closer than this are one point; 0: 1e-7 delta
    std::vector<double> crossings;
};

TransversalSection make_section(const FuchsianConnection& conn, cplx centre, cplx direction,
                                double delta);
/// Appends transversal crossings (angle at least 1e-3) and sorts them.
void collect_crossings(TransversalSection& section, const Trajectory& traj);

struct GapStatistics {
    std::vector<double> points;  // sorted, merged at the resolution
    std::vector<double> gaps;    // consecutive gaps between points
    double median_gap = 0;
    std::size_t raw_crossings = 0;
    bool isolated_point = false;  // some point with both gaps above 10x the median
    bool dense_interval = false;  // some run whose gaps shrink to the mean spacing
    double box_dimension = 0;
};

GapStatistics transversal_analysis(const TransversalSection& section);
GapStatistics transversal_analysis(const Trajectory& traj, TransversalSection& section);

enum class OmegaTag {
    ConvergesToPole,
    Periodic,
    CantorLikeEvidence,
    FillsRegionEvidence,
    FillsAllEvidence,
    AccumulatesOnForeignPeriodic,
    AccumulatesOnSaddleGraph,
    Undetermined,
};

const char* to_string(OmegaTag tag);

struct OmegaVerdict {
    OmegaTag tag = OmegaTag::Undetermined;
    int pole = -1;        // index into conn.poles()
    double period = 0;
    double recurrence_error = 0;
    GapStatistics stats;
    std::string details;
    // budget report
    Termination reason = Termination::TimeLimit;
    std::size_t steps = 0;
    double t_reached = 0;
};

/// Short label such as ConvergesToPole(inf) or Periodic(T=6.283185).
std::string describe(const OmegaVerdict& v, const FuchsianConnection& conn);

struct ClassifyBudget {
    double t_max = 1000;
    std::size_t max_steps = 1000000;
    double wall_clock_s = 30;
    double recurrence_tol = 1e-8;
    TraceOptions trace;  // integrator settings; the budget fields above override it
};

struct Classification {
    OmegaVerdict verdict;
    Trajectory trajectory;
};

Classification classify_full(const FuchsianConnection& conn, const GeodesicState& initial,
                             const ClassifyBudget& budget = {});
OmegaVerdict classify(const FuchsianConnection& conn, const GeodesicState& initial,
                      const ClassifyBudget& budget = {});

struct Recurrence {
    double period;
    double error;  // density(z0) |z - z0| + |v/|v| - v0/|v0||
};

/// First return of the trajectory to its initial phase point, if within tol.
std::optional<Recurrence> find_period(const Trajectory& traj, double tol = 1e-8);

struct SaddleConnection {
    int from = -1;  // indices into conn.poles()
    int to = -1;
    double launch_angle = 0;  // critical ray angle in the adapted chart of `from`
    double g_length = 0;
    DirectionClass direction;
    std::vector<cplx> path;   // standard chart
};

struct SaddleSearchOptions {
    int directions = 180;
    double max_length = 20;  // g-length budget per shot
    int refine_iterations = 100;
    TraceOptions trace;
};

std::vector<SaddleConnection> saddle_connection_search(const FuchsianConnection& conn,
                                                       const SaddleSearchOptions& opts = {});

enum class BoundaryKind { Pole, SaddleConnection, NotPeriodic, LimitReached };

const char* to_string(BoundaryKind k);

struct RingBoundary {
    int side = 0;  // +1 or -1 along the seed normal i v
    BoundaryKind kind = BoundaryKind::LimitReached;
    int pole = -1;
    double offset = 0;       // g-distance from the seed where the march stopped
    bool unbounded = false;  // march approaching a pole of residue <= -1
    std::vector<SaddleConnection> connections;
    std::string description;
};

struct RingLeaf {
    double offset = 0;  // signed g-distance from the seed along the normal geodesic
    double period = 0;
    double g_length = 0;
    std::vector<cplx> path;
};

struct RingDomainReport {
    std::vector<RingLeaf> leaves;  // sorted by offset
    double width = 0;
    std::vector<double> leaf_lengths;
    std::vector<RingBoundary> boundary;
    bool disjoint = true;
    DirectionClass direction;
};

struct RingProbeOptions {
    double step = 0.1;
    double max_width = 3;  // per side
    int bisections = 20;
    double recurrence_tol = 1e-7;
    bool search_saddles = true;
    SaddleSearchOptions saddles;
    TraceOptions trace;
};

RingDomainReport ring_domain_probe(const FuchsianConnection& conn, const Trajectory& periodic,
                                   const RingProbeOptions& opts = {});

/// One random connection and initial state per call.
struct AuditSample {
    FuchsianConnection conn;
    GeodesicState initial;
};
using ConnectionGenerator = std::function<AuditSample(std::mt19937_64&)>;

/// Two to four finite poles in the unit disc with real residues, infinity
/// completing the sum, and a random unit-direction start. Half the draws take
/// residues in (-0.9, 1.5); the other half in (-0.9, -0.3) with the residue at
/// infinity above -1, so that the metric has finite area.
ConnectionGenerator random_real_generator();

struct AuditRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::vector<PoleSpec> poles;
    cplx z0, v0;
    OmegaVerdict verdict;
    std::string label;
    bool simple = true;
    bool real_periods = true;
    bool anomaly = false;
};

struct AuditReport {
    std::uint64_t seed = 0;
    std::vector<AuditRecord> records;
    std::size_t anomalies = 0;
    std::size_t counted = 0;  // simple, non-periodic, real residues
    std::string text() const;
};

struct AuditOptions {
    std::size_t samples = 200;
    std::uint64_t seed = 1;
    unsigned threads = 0;  // 0: CONNEXION_THREADS, else hardware concurrency
    ClassifyBudget budget;
};

/// Worker count: CONNEXION_THREADS if set, else hardware concurrency, at least 1.
unsigned worker_count(unsigned requested = 0);

AuditReport exclusion_audit(const ConnectionGenerator& gen, const AuditOptions& opts = {});

}  // namespace connexion
