#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "connexion/connection.hpp"

namespace connexion {

/// Outcome of one numerical check against a closed form or a sharp identity.
struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0;      // measured error, spread or count, as named
    double tolerance = 0;
    std::string detail;
};

/// Traces in the connection {0: rho, inf: -2 - rho} against e^{i alpha}(at + b)^{1/(rho+1)}
/// over the span inside |z| < 1. value: sup |z - closed form|.
CheckResult check_closed_form(double rho, std::uint64_t seed, int traces = 8, double tol = 1e-8);

/// Radial geodesics from |z| = 1 into the pole; value: spread of the measured
/// g-lengths, which must also match 1/(rho+1).
CheckResult check_critical_lengths(double rho, std::uint64_t seed, int directions = 100, double tol = 1e-9);

/// Two-segment path through the pole between random points of the unit disc,
/// measured by quadrature of the density. value: largest excess over 2/(rho+1).
CheckResult check_diameter_bound(double rho, std::uint64_t seed, int pairs = 1000);

/// Noncritical geodesics reaching inside the self-intersection radius, rho in (-1, -1/2).
/// value: number of traced geodesics without a self-crossing.
CheckResult check_self_intersection(double rho, std::uint64_t seed, int traces = 10);

/// Deep noncritical pairs with angular gap above pi/(rho+1) stay disjoint.
/// value: number of pairs that cross.
CheckResult check_wide_gap_disjoint(double rho, std::uint64_t seed, int pairs = 10);

/// Deep noncritical pairs flagged by must_cross do intersect. value: pairs found crossing.
CheckResult check_must_cross(double rho, std::uint64_t seed, int pairs = 50);

/// Random geodesic polygons with the pole as vertex, built in the straightened
/// plane of a lone pole of each residue. value: largest residual.
CheckResult check_chart_polygons(const std::vector<double>& residues, std::uint64_t seed, int count = 50,
                                 double tol = 1e-6);

/// The unit circle around a residue -1 pole: residual of the sphere identity.
CheckResult check_circle_identity();

/// The two-gon formed by the saddle connection between two residue 1/2 poles.
CheckResult check_two_gon(double tol = 1e-3);

/// Selections run by the verify command.
std::vector<CheckResult> verify_local(const std::vector<double>& residues, std::uint64_t seed);
std::vector<CheckResult> verify_teichmuller(const FuchsianConnection& conn, std::uint64_t seed);
std::vector<CheckResult> verify_saddles(const FuchsianConnection& conn);

/// One line per check: PASS/FAIL, name, value, tolerance, detail.
std::string format_checks(const std::vector<CheckResult>& checks);

}  // namespace connexion
