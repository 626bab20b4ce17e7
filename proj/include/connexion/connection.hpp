#pragma once

#include <complex>
#include <memory>
#include <utility>
#include <vector>

namespace connexion {

using cplx = std::complex<double>;

/// A point of the Riemann sphere: a finite coordinate or the point at infinity.
class SpherePoint {
public:
    static SpherePoint finite(cplx z);
    static SpherePoint infinity() { return SpherePoint(true, {}); }

    bool is_infinity() const { return inf_; }
    cplx z() const { return z_; }

    bool operator==(const SpherePoint& o) const {
        return inf_ == o.inf_ && (inf_ || z_ == o.z_);
    }

private:
    SpherePoint(bool inf, cplx z) : inf_(inf), z_(z) {}
    bool inf_;
    cplx z_;
};

struct PoleSpec {
    SpherePoint location;
    cplx residue;
};

inline PoleSpec pole(cplx z, cplx residue) { return {SpherePoint::finite(z), residue}; }
inline PoleSpec pole_at_infinity(cplx residue) { return {SpherePoint::infinity(), residue}; }

enum class Chart { Standard, Infinity };

struct BuildOptions {
    bool allow_complex = false;  // non-real periods
    bool minimal_form = false;   // drop an implied infinity residue that is exactly 0
    double switch_radius = 10.0;
};

/// Fuchsian meromorphic connection on the sphere, eta = sum rho_j/(z - p_j) dz.
/// Immutable; copies share the same data.
class FuchsianConnection {
public:
    const std::vector<PoleSpec>& poles() const { return d_->poles; }
    const std::vector<cplx>& finite_locations() const { return d_->loc; }
    const std::vector<cplx>& finite_residues() const { return d_->res; }

    bool has_infinity_pole() const { return d_->has_inf; }
    cplx residue_at_infinity() const { return d_->res_inf; }
    cplx residue_sum() const;
    bool real_residues(double tol = 1e-12) const;
    double switch_radius() const { return d_->switch_radius; }

    /// Local representation f in the given chart. Throws EvalAtPole near a pole.
    cplx local_rep(Chart chart, cplx x) const;
    /// Same without the pole check, for inner loops.
    cplx local_rep_unchecked(Chart chart, cplx x) const noexcept;

    /// Principal-branch primitive K of f in the chart (defined up to branch choice).
    cplx primitive(Chart chart, cplx x) const;
    /// Increment of K along the short segment a -> b, each log principal.
    /// Returns false if some pole subtends an angle of pi/2 or more.
    bool primitive_increment(Chart chart, cplx a, cplx b, cplx& dk) const noexcept;

    /// Metric density exp(Re K) computed directly from the position.
    double density(Chart chart, cplx x) const;

    /// Distance to the nearest pole with nonzero residue, measured in the chart.
    double pole_distance(Chart chart, cplx x) const noexcept;
    /// Pole locations (nonzero residue) as seen in the chart.
    std::vector<std::pair<cplx, cplx>> chart_poles(Chart chart) const;

private:
    struct Data {
        std::vector<PoleSpec> poles;
        std::vector<cplx> loc, res;
        bool has_inf = false;
        cplx res_inf = 0.0;
        double switch_radius = 10.0;
    };
    std::shared_ptr<const Data> d_;

    friend FuchsianConnection build_connection(std::vector<PoleSpec>, BuildOptions);
};

FuchsianConnection build_connection(std::vector<PoleSpec> poles, BuildOptions opts = {});

cplx local_rep(const FuchsianConnection& conn, Chart chart, cplx x);

struct LoopPath {
    std::vector<cplx> vertices;  // closed: first == last
    bool reversed = false;
};

/// Winding number of a closed polyline around p, by ray casting.
int winding_number(const std::vector<cplx>& closed, cplx p);

cplx monodromy_of_loop(const FuchsianConnection& conn, const LoopPath& loop);

struct Root {
    cplx location;
    int order;
};

/// Connection adapted to q = prod (z-a)^m dz^k. Numerator roots are zeros,
/// denominator roots are poles, both given with positive multiplicity.
FuchsianConnection from_k_differential(const std::vector<Root>& numerator,
                                       const std::vector<Root>& denominator, int k);

}  // namespace connexion
