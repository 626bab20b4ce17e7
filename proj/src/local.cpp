#include "connexion/local.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "connexion/errors.hpp"

namespace connexion {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2 * std::numbers::pi;

// principal branch continued from the ray arg = 0 through the upper half plane
double upper_arg(cplx w) {
    double t = std::arg(w);
    if (t < -kPi / 2) t += kTwoPi;
    return t;
}

}  // namespace

double wrap_angle(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

void AdaptedChart::eval_series(cplx zeta, cplx& s, cplx& ds, cplx& dds) const {
    s = ds = dds = 0.0;
    for (std::size_t j = series.size(); j-- > 0;) {
        dds = dds * zeta + 2.0 * ds;
        ds = ds * zeta + s;
        s = s * zeta + series[j];
    }
}

cplx AdaptedChart::xi(cplx zeta) const {
    cplx s, ds, dds;
    eval_series(zeta, s, ds, dds);
    const double m = rho + 1.0;
    cplx k = std::exp(std::log(s) / m);
    cplx dk = k * ds / (m * s);
    return k + zeta * dk;
}

cplx AdaptedChart::forward(cplx x) const {
    cplx zeta = x - centre;
    cplx s, ds, dds;
    eval_series(zeta, s, ds, dds);
    return zeta * std::exp(std::log(s) / (rho + 1.0));
}

cplx AdaptedChart::inverse(cplx w) const {
    if (std::abs(w) > radius * (1.0 + 1e-9)) throw Error(Errc::OutOfDomain, "point outside the adapted chart");
    cplx k0 = std::exp(std::log(series[0]) / (rho + 1.0));
    cplx zeta = w / k0;
    for (int it = 0; it < 60; ++it) {
        cplx f = forward(zeta + centre) - w;
        cplx step = f / xi(zeta);
        zeta -= step;
        if (std::abs(step) <= 1e-16 * std::max(std::abs(zeta), 1e-300)) break;
    }
    return zeta + centre;
}

cplx AdaptedChart::pulled_rep(cplx zeta) const {
    cplx h = 0.0;
    for (const auto& [d, r] : others) h += r / (zeta - d);
    cplx s, ds, dds;
    eval_series(zeta, s, ds, dds);
    const double m = rho + 1.0;
    cplx k = std::exp(std::log(s) / m);
    cplx q = ds / (m * s);
    cplx dk = k * q;
    cplx ddk = dk * q + k * (dds * s - ds * ds) / (m * s * s);
    cplx x = k + zeta * dk;
    cplx dx = 2.0 * dk + zeta * ddk;
    return (rho / zeta + h - dx / x) / x;
}

std::pair<cplx, cplx> AdaptedChart::pull(const GeodesicState& s) const {
    GeodesicState g = to_chart(s, source);
    cplx zeta = g.z - centre;
    return {forward(g.z), xi(zeta) * g.v};
}

GeodesicState AdaptedChart::push(const FuchsianConnection& conn, cplx w, cplx dw) const {
    cplx x = inverse(w);
    cplx v = dw / xi(x - centre);
    return make_state(conn, source, x, v);
}

std::string AdaptedChart::diagnostics() const {
    std::ostringstream os;
    os.precision(17);
    os << "pole=";
    if (pole.is_infinity()) os << "inf";
    else os << pole.z().real() << (pole.z().imag() < 0 ? "" : "+") << pole.z().imag() << "i";
    os << "\nrho=" << rho << "\nN=" << order << "\nzeta_radius=" << zeta_radius << "\nradius=" << radius
       << "\nresidual=" << residual << "\n";
    return os.str();
}

AdaptedChart adapted_chart(const FuchsianConnection& conn, const SpherePoint& where, int N, double max_radius) {
    if (N < 4) throw Error(Errc::InvalidArgument, "series order must be at least 4");
    if (!(max_radius > 0)) throw Error(Errc::InvalidArgument, "max radius must be positive");
    const PoleSpec* found = nullptr;
    for (const auto& p : conn.poles()) {
        if (where.is_infinity() ? p.location.is_infinity()
                                : !p.location.is_infinity() && std::abs(p.location.z() - where.z()) <= 1e-12)
            found = &p;
    }
    if (!found) throw Error(Errc::InvalidArgument, "no pole at the requested point");
    if (found->residue.imag() != 0.0) throw Error(Errc::NonRealResidue, "adapted charts need a real residue");
    const double rho = found->residue.real();
    if (rho <= -1.0) throw Error(Errc::ResonantOrLow, "adapted charts need rho > -1");

    AdaptedChart ch;
    ch.pole = found->location;
    ch.rho = rho;
    ch.order = N;
    ch.source = where.is_infinity() ? Chart::Infinity : Chart::Standard;
    ch.centre = where.is_infinity() ? cplx(0) : found->location.z();
    double half = std::numeric_limits<double>::infinity();
    for (const auto& [q, r] : conn.chart_poles(ch.source)) {
        if (std::abs(q - ch.centre) <= 1e-12) continue;
        ch.others.emplace_back(q - ch.centre, r);
        half = std::min(half, 0.5 * std::abs(q - ch.centre));
    }

    // holomorphic part h(zeta) = sum r/(zeta - d): h_n = -sum r / d^{n+1}
    std::vector<cplx> h(N, 0.0);
    for (const auto& [d, r] : ch.others) {
        cplx inv = 1.0 / d;
        cplx pw = inv;
        for (int n = 0; n < N; ++n) {
            h[n] -= r * pw;
            pw *= inv;
        }
    }
    std::vector<cplx> F(N + 1, 0.0);
    for (int n = 1; n <= N; ++n) F[n] = h[n - 1] / double(n);
    ch.taylor_c.assign(N + 1, 0.0);
    ch.taylor_c[0] = 1.0;
    for (int n = 1; n <= N; ++n) {
        cplx acc = 0.0;
        for (int k = 1; k <= n; ++k) acc += double(k) * F[k] * ch.taylor_c[n - k];
        ch.taylor_c[n] = acc / double(n);
    }
    ch.series.resize(N + 1);
    for (int j = 0; j <= N; ++j) ch.series[j] = ch.taylor_c[j] / (double(j) + rho + 1.0);

    const double R0 = std::min(half, max_radius);
    for (int k = 0; k < 40; ++k) {
        const double R = R0 * std::ldexp(1.0, -k);
        bool ok = true;
        double worst = 0.0;
        for (double frac : {0.2, 0.5, 0.8, 1.0}) {
            for (int a = 0; a < 48 && ok; ++a) {
                cplx zeta = std::polar(R * frac, kTwoPi * (a + 0.5) / 48);
                cplx s, ds, dds;
                ch.eval_series(zeta, s, ds, dds);
                if (!(s.real() > 0.0)) {
                    ok = false;
                    break;
                }
                cplx x = ch.xi(zeta);
                if (!(std::abs(x) > 1e-12)) {
                    ok = false;
                    break;
                }
                cplx w = ch.forward(zeta + ch.centre);
                double res = std::abs(ch.pulled_rep(zeta) - rho / w);
                if (!(res <= 1e-8)) ok = false;
                worst = std::max(worst, res);
            }
        }
        if (!ok) continue;
        double inscribed = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 256; ++a)
            inscribed = std::min(inscribed, std::abs(ch.forward(std::polar(R, kTwoPi * a / 256) + ch.centre)));
        ch.zeta_radius = R;
        ch.radius = 0.999 * inscribed;
        ch.residual = worst;
        return ch;
    }
    throw Error(Errc::SeriesDivergence, "pullback residual test failed at every radius");
}

LocalGeodesicParams local_params(double rho, double r, cplx z0, cplx v0) {
    if (z0 == 0.0) throw Error(Errc::AtPole, "initial point is the pole");
    if (v0 == 0.0) throw Error(Errc::ZeroVelocity, "zero velocity");
    LocalGeodesicParams p;
    p.rho = rho;
    p.r = r;
    if (rho == -1.0) {
        if (std::abs(z0) > r * (1.0 + 1e-12)) throw Error(Errc::OutOfDomain, "point outside the chart disc");
        p.alpha = 0.0;
        p.b = cplx(std::arg(z0), -std::log(std::abs(z0) / r));
        p.a = cplx(0, -1) * v0 / z0;
        return p;
    }
    const double m = rho + 1.0;
    const double th = std::arg(z0);
    const double mod = std::pow(std::abs(z0), m);
    const double speed = m * std::pow(std::abs(z0), rho) * std::abs(v0);
    cplx ratio = v0 / z0;
    if (ratio.imag() == 0.0) {
        // critical: the geodesic runs along the ray arg z = th
        p.alpha = wrap_angle(th);
        p.b = mod;
        p.a = ratio.real() > 0 ? speed : -speed;
        return p;
    }
    double psi = wrap_angle(-std::arg(ratio));
    double sgn = 1.0;
    if (psi > kPi) {
        psi -= kPi;
        sgn = -1.0;
    }
    p.alpha = wrap_angle(th - psi / m);
    p.b = std::polar(mod, psi);
    p.a = sgn * speed;
    return p;
}

cplx chi(double rho, double alpha, double r, cplx w) {
    if (w.imag() < -1e-12 * std::max(1.0, std::abs(w))) throw Error(Errc::OutOfDomain, "argument below the real axis");
    if (rho == -1.0) return r * std::exp(cplx(0, 1) * w);
    if (w == 0.0) return 0.0;
    const double m = rho + 1.0;
    return std::polar(std::pow(std::abs(w), 1.0 / m), alpha + upper_arg(w) / m);
}

cplx chi_derivative(double rho, double alpha, double r, cplx w) {
    if (rho == -1.0) return cplx(0, 1) * r * std::exp(cplx(0, 1) * w);
    const double m = rho + 1.0;
    return chi(rho, alpha, r, w) / (m * w);
}

std::pair<cplx, cplx> closed_form(const LocalGeodesicParams& p, double t) {
    cplx w = p.a * t + p.b;
    if (p.rho == -1.0) {
        cplx z = p.r * std::exp(cplx(0, 1) * w);
        return {z, cplx(0, 1) * p.a * z};
    }
    if (w.imag() < 0.0) w.imag(0.0);
    return {chi(p.rho, p.alpha, p.r, w), p.a * chi_derivative(p.rho, p.alpha, p.r, w)};
}

bool is_critical(const LocalGeodesicParams& p, double tol) {
    return std::abs(p.b.imag()) <= tol * std::abs(p.b);
}

double critical_length(double rho, double r) {
    if (!(rho > -1.0) || !(r > 0)) throw Error(Errc::OutOfRange, "need rho > -1 and r > 0");
    return std::pow(r, rho + 1.0) / (rho + 1.0);
}

double diameter_bound(double rho, double r) { return 2.0 * critical_length(rho, r); }

bool must_cross(double rho, double alpha1, double alpha2) {
    if (!(rho > -1.0)) throw Error(Errc::OutOfRange, "need rho > -1");
    double g = wrap_angle(alpha1 - alpha2);
    g = std::min(g, kTwoPi - g);
    return g > 1e-12 && g < kPi / (rho + 1.0);
}

double self_intersection_radius(double rho, double r) {
    if (!(rho > -1.0 && rho < -0.5)) throw Error(Errc::OutOfRange, "self-intersection radius needs rho in (-1, -1/2)");
    if (!(r > 0)) throw Error(Errc::InvalidArgument, "radius must be positive");
    const double m = rho + 1.0;
    const double R = std::pow(r, m);
    // opening angle of the chord Im w = tau inside the half disc |w| < R
    auto beta = [&](double tau) { return kPi - 2.0 * std::atan(tau / std::sqrt(R * R - tau * tau)); };
    double lo = 0.0, hi = R;
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        if (beta(mid) > kTwoPi * m) lo = mid;
        else hi = mid;
    }
    auto density = [&](double s) {
        cplx w(0, s);
        cplx z = chi(rho, 0.0, r, w);
        return std::pow(std::abs(z), rho) * std::abs(chi_derivative(rho, 0.0, r, w));
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(density, 0.0, lo, 5, 1e-13);
}

bool DirectionInterval::single_arc() const { return beta2 - beta1 < kPi / (rho + 1.0); }

bool DirectionInterval::contains(double angle) const {
    double a = wrap_angle(angle);
    if (single_arc()) return a >= beta1 && a <= beta2;
    return a <= beta1 || a >= beta2;
}

double entry_direction(const AdaptedChart& chart, const GeodesicState& entry) {
    auto [w, dw] = chart.pull(entry);
    if (!(std::abs(w) < chart.radius)) throw Error(Errc::SegmentOutsideChart, "entry state outside the chart");
    auto p = local_params(chart.rho, chart.radius, w, dw);
    // a critical geodesic read with b < 0 runs along the ray alpha + pi/(rho+1)
    if (is_critical(p) && p.b.real() < 0) return wrap_angle(p.alpha + kPi / (chart.rho + 1.0));
    return p.alpha;
}

double entry_direction(const AdaptedChart& chart, const Trajectory& segment) {
    if (segment.samples.empty()) throw Error(Errc::SegmentOutsideChart, "empty segment");
    return entry_direction(chart, segment.samples.front().state);
}

std::optional<PolePassage> pole_passage(const FuchsianConnection& conn, const AdaptedChart& chart,
                                        const GeodesicState& s, double exit_radius, double critical_tol) {
    if (chart.rho <= -1.0) return std::nullopt;
    const GeodesicState in = to_chart(s, chart.source);
    auto [w_in, dw_in] = chart.pull(in);
    if (w_in == 0.0 || dw_in == 0.0) return std::nullopt;
    const auto lp = local_params(chart.rho, chart.radius, w_in, dw_in);
    if (is_critical(lp, critical_tol)) return std::nullopt;
    const double m = chart.rho + 1.0;
    const double ru = std::pow(exit_radius, m);
    const double hb = lp.b.imag();
    if (!(ru > hb) || exit_radius >= chart.radius) return std::nullopt;
    // the line u = a t + b leaves |u| = ru going forward
    const double a = lp.a.real();
    const double duration = ((a > 0 ? 1.0 : -1.0) * std::sqrt(ru * ru - hb * hb) - lp.b.real()) / a;
    if (!(duration > 0)) return std::nullopt;

    const cplx zeta_in = in.z - chart.centre;
    const auto poles = conn.chart_poles(chart.source);
    auto shared = std::make_shared<const AdaptedChart>(chart);
    auto eval = [conn, shared, lp, in, w_in, zeta_in, poles, m](double t) {
        auto [w, dw] = closed_form(lp, t);
        const AdaptedChart& ch = *shared;
        cplx x = ch.inverse(w);
        cplx zeta = x - ch.centre;
        GeodesicState g;
        g.chart = ch.source;
        g.z = x;
        g.v = dw / ch.xi(zeta);
        // arg of zeta continued through the turn: arg w moves by the turn of u over m
        cplx u = lp.a * t + lp.b;
        double turn = (std::arg(u) - std::arg(lp.b)) / m - std::arg((w / zeta) / (w_in / zeta_in));
        cplx dk = 0.0;
        for (const auto& [p, r] : poles) {
            if (std::abs(p - ch.centre) <= 1e-12 * std::max(1.0, std::abs(p))) {
                dk += r * cplx(std::log(std::abs(zeta / zeta_in)), turn);
            } else {
                dk += r * std::log((x - p) / (in.z - p));
            }
        }
        g.k_phase = in.k_phase + dk;
        return g;
    };
    PolePassage out{eval(duration), duration, eval};
    cplx c0 = first_integral_of(in), c1 = first_integral_of(out.exit);
    if (!(std::abs(c1 - c0) <= 1e-6 * std::abs(c0))) return std::nullopt;
    return out;
}

}  // namespace connexion
