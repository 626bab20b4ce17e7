#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "connexion/connection.hpp"
#include "connexion/geodesic.hpp"

namespace connexion {

/// Pole-centred coordinate w in which the connection reads rho dw/w.
/// Built from zeta = x - centre in the chart that contains the pole.
struct AdaptedChart {
    SpherePoint pole = SpherePoint::infinity();
    Chart source = Chart::Standard;
    cplx centre;
    double rho = 0;
    int order = 0;
    double zeta_radius = 0;  // radius of the source disc the chart was validated on
    double radius = 0;       // r: inscribed disc in the w coordinate
    double residual = 0;     // worst |eta_w - rho/w| on the test grid
    std::vector<cplx> taylor_c;  // coefficients of exp(F)
    std::vector<cplx> series;    // coefficients of S with K = S^{1/(rho+1)}
    std::vector<std::pair<cplx, cplx>> others;  // remaining poles in zeta, with residues

    cplx forward(cplx x) const;        // source coordinate -> w
    cplx inverse(cplx w) const;        // w -> source coordinate
    cplx xi(cplx zeta) const;          // dw/dzeta
    /// Position and velocity of a geodesic state in the w coordinate.
    std::pair<cplx, cplx> pull(const GeodesicState& s) const;
    /// State in the connection chart for a w-position and w-velocity.
    GeodesicState push(const FuchsianConnection& conn, cplx w, cplx dw) const;
    bool contains(cplx w) const { return std::abs(w) < radius; }

    /// Key-value report: residual, radius, N.
    std::string diagnostics() const;

    // S, S', S'' at zeta
    void eval_series(cplx zeta, cplx& s, cplx& ds, cplx& dds) const;
    // pulled-back local representation at zeta, exact holomorphic part from the connection
    cplx pulled_rep(cplx zeta) const;
};

AdaptedChart adapted_chart(const FuchsianConnection& conn, const SpherePoint& pole, int N = 24,
                           double max_radius = 1.0);

/// Closed-form description z(t) = chi_rho^alpha(a t + b).
struct LocalGeodesicParams {
    double rho = 0;
    double r = 0;
    double alpha = 0;
    cplx a;
    cplx b;
};

LocalGeodesicParams local_params(double rho, double r, cplx z0, cplx v0);

cplx chi(double rho, double alpha, double r, cplx w);
cplx chi_derivative(double rho, double alpha, double r, cplx w);

/// Position and velocity of the closed-form geodesic at time t.
std::pair<cplx, cplx> closed_form(const LocalGeodesicParams& p, double t);

bool is_critical(const LocalGeodesicParams& p, double tol = 1e-9);

double critical_length(double rho, double r);
double diameter_bound(double rho, double r);
bool must_cross(double rho, double alpha1, double alpha2);
double self_intersection_radius(double rho, double r);

/// The angle set I^rho[beta1, beta2].
struct DirectionInterval {
    double rho;
    double beta1;
    double beta2;
    bool single_arc() const;
    bool contains(double angle) const;
};

double entry_direction(const AdaptedChart& chart, const GeodesicState& entry);
double entry_direction(const AdaptedChart& chart, const Trajectory& segment);

/// Crossing of a pole neighbourhood along the straight line of the adapted chart.
struct PolePassage {
    GeodesicState exit;  // in the chart's source coordinate, K continued
    double duration;
    std::function<GeodesicState(double)> eval;  // state at time since entry
};

/// Carries a noncritical state near the pole out to |w| = exit_radius in
/// closed form. Empty when the state is critical within critical_tol
/// (relative |Im b|), the residue is at most -1, or c is not preserved.
std::optional<PolePassage> pole_passage(const FuchsianConnection& conn, const AdaptedChart& chart,
                                        const GeodesicState& s, double exit_radius,
                                        double critical_tol = 1e-6);

double wrap_angle(double a);  // into [0, 2pi)

}  // namespace connexion
