#include "connexion/connection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "connexion/errors.hpp"

namespace connexion {

namespace {

constexpr double kPoleEval = 1e-12;
constexpr double kSumTol = 1e-12;

bool finite_c(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace

SpherePoint SpherePoint::finite(cplx z) {
    if (!finite_c(z)) throw Error(Errc::InvalidArgument, "non-finite coordinate");
    return SpherePoint(false, z);
}

cplx FuchsianConnection::residue_sum() const {
    cplx s = d_->res_inf;
    for (auto r : d_->res) s += r;
    return s;
}

bool FuchsianConnection::real_residues(double tol) const {
    for (const auto& p : d_->poles)
        if (std::abs(p.residue.imag()) > tol) return false;
    return true;
}

FuchsianConnection build_connection(std::vector<PoleSpec> poles, BuildOptions opts) {
    if (!(opts.switch_radius > 0.0) || !std::isfinite(opts.switch_radius))
        throw Error(Errc::InvalidArgument, "switch radius must be positive");
    auto d = std::make_shared<FuchsianConnection::Data>();
    d->switch_radius = opts.switch_radius;
    cplx sum = 0.0;
    bool explicit_inf = false;
    for (std::size_t i = 0; i < poles.size(); ++i) {
        const auto& p = poles[i];
        if (!finite_c(p.residue)) throw Error(Errc::InvalidArgument, "non-finite residue");
        if (!opts.allow_complex && p.residue.imag() != 0.0)
            throw Error(Errc::NonRealResidue, "complex residue requires the non-real-periods flag");
        for (std::size_t j = 0; j < i; ++j) {
            const auto& q = poles[j];
            bool dup = p.location.is_infinity() ? q.location.is_infinity()
                       : !q.location.is_infinity() &&
                             std::abs(p.location.z() - q.location.z()) <= kPoleEval;
            if (dup) throw Error(Errc::DuplicatePole, "two poles share a location");
        }
        sum += p.residue;
        if (p.location.is_infinity()) {
            explicit_inf = true;
            d->has_inf = true;
            d->res_inf = p.residue;
        } else {
            d->loc.push_back(p.location.z());
            d->res.push_back(p.residue);
        }
    }
    if (explicit_inf) {
        if (std::abs(sum + 2.0) > kSumTol) {
            std::ostringstream os;
            os.precision(15);
            os << "residues sum to " << sum.real();
            if (sum.imag() != 0.0) os << (sum.imag() < 0 ? "-" : "+") << std::abs(sum.imag()) << "i";
            os << ", the sphere requires -2";
            throw Error(Errc::SumMismatch, os.str());
        }
    } else {
        cplx implied = -2.0 - sum;
        d->res_inf = implied;
        if (!(opts.minimal_form && implied == 0.0)) {
            d->has_inf = true;
            poles.push_back(pole_at_infinity(implied));
        }
    }
    d->poles = std::move(poles);
    FuchsianConnection c;
    c.d_ = std::move(d);
    return c;
}

cplx FuchsianConnection::local_rep_unchecked(Chart chart, cplx x) const noexcept {
    const auto& loc = d_->loc;
    const auto& res = d_->res;
    cplx f = 0.0;
    if (chart == Chart::Standard) {
        for (std::size_t j = 0; j < loc.size(); ++j) f += res[j] / (x - loc[j]);
    } else {
        if (d_->res_inf != 0.0) f += d_->res_inf / x;
        for (std::size_t j = 0; j < loc.size(); ++j) f -= res[j] * loc[j] / (1.0 - loc[j] * x);
    }
    return f;
}

cplx FuchsianConnection::local_rep(Chart chart, cplx x) const {
    if (!finite_c(x)) throw Error(Errc::InvalidArgument, "non-finite point");
    for (const auto& [p, r] : chart_poles(chart)) {
        (void)r;
        if (std::abs(x - p) <= kPoleEval) throw Error(Errc::EvalAtPole, "point is a pole");
    }
    return local_rep_unchecked(chart, x);
}

cplx local_rep(const FuchsianConnection& conn, Chart chart, cplx x) {
    return conn.local_rep(chart, x);
}

cplx FuchsianConnection::primitive(Chart chart, cplx x) const {
    const auto& loc = d_->loc;
    const auto& res = d_->res;
    cplx k = 0.0;
    if (chart == Chart::Standard) {
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0) k += res[j] * std::log(x - loc[j]);
    } else {
        if (d_->res_inf != 0.0) k += d_->res_inf * std::log(x);
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0 && loc[j] != 0.0) k += res[j] * std::log(1.0 - loc[j] * x);
    }
    return k;
}

bool FuchsianConnection::primitive_increment(Chart chart, cplx a, cplx b, cplx& dk) const noexcept {
    constexpr double lim = std::numbers::pi / 2;
    const auto& loc = d_->loc;
    const auto& res = d_->res;
    dk = 0.0;
    auto term = [&](cplx r, cplx num, cplx den) {
        cplx l = std::log(num / den);
        if (std::abs(l.imag()) >= lim) return false;
        dk += r * l;
        return true;
    };
    if (chart == Chart::Standard) {
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0 && !term(res[j], b - loc[j], a - loc[j])) return false;
    } else {
        if (d_->res_inf != 0.0 && !term(d_->res_inf, b, a)) return false;
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0 && loc[j] != 0.0 &&
                !term(res[j], 1.0 - loc[j] * b, 1.0 - loc[j] * a))
                return false;
    }
    return true;
}

double FuchsianConnection::density(Chart chart, cplx x) const {
    const auto& loc = d_->loc;
    const auto& res = d_->res;
    double lg = 0.0;
    if (chart == Chart::Standard) {
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0) lg += res[j].real() * std::log(std::abs(x - loc[j]));
    } else {
        if (d_->res_inf != 0.0) lg += d_->res_inf.real() * std::log(std::abs(x));
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0 && loc[j] != 0.0)
                lg += res[j].real() * std::log(std::abs(1.0 - loc[j] * x));
    }
    return std::exp(lg);
}

std::vector<std::pair<cplx, cplx>> FuchsianConnection::chart_poles(Chart chart) const {
    std::vector<std::pair<cplx, cplx>> out;
    const auto& loc = d_->loc;
    const auto& res = d_->res;
    if (chart == Chart::Standard) {
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0) out.emplace_back(loc[j], res[j]);
    } else {
        if (d_->res_inf != 0.0) out.emplace_back(0.0, d_->res_inf);
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0 && loc[j] != 0.0) out.emplace_back(1.0 / loc[j], res[j]);
    }
    return out;
}

double FuchsianConnection::pole_distance(Chart chart, cplx x) const noexcept {
    double best = std::numeric_limits<double>::infinity();
    const auto& loc = d_->loc;
    const auto& res = d_->res;
    if (chart == Chart::Standard) {
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0) best = std::min(best, std::abs(x - loc[j]));
    } else {
        if (d_->res_inf != 0.0) best = std::abs(x);
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (res[j] != 0.0 && loc[j] != 0.0) best = std::min(best, std::abs(x - 1.0 / loc[j]));
    }
    return best;
}

int winding_number(const std::vector<cplx>& closed, cplx p) {
    if (closed.size() < 2) return 0;
    double scale = 0.0;
    for (auto v : closed) scale = std::max(scale, std::abs(v - p));
    const double eps = 1e-13 * std::max(scale, 1.0);
    // deterministic sequence of ray directions; retried when a vertex sits on the ray
    for (int attempt = 0; attempt < 64; ++attempt) {
        double theta = std::fmod(attempt * 2.399963229728653, 2 * std::numbers::pi);
        cplx rot = std::polar(1.0, -theta);
        int wn = 0;
        bool degenerate = false;
        for (std::size_t i = 0; i + 1 < closed.size() && !degenerate; ++i) {
            cplx a = (closed[i] - p) * rot;
            cplx b = (closed[i + 1] - p) * rot;
            if ((std::abs(a.imag()) < eps && a.real() > 0) || (std::abs(b.imag()) < eps && b.real() > 0)) {
                degenerate = true;
                break;
            }
            if ((a.imag() > 0) != (b.imag() > 0)) {
                double x = a.real() + (0.0 - a.imag()) * (b.real() - a.real()) / (b.imag() - a.imag());
                if (std::abs(x) < eps) {
                    degenerate = true;
                    break;
                }
                if (x > 0) wn += b.imag() > a.imag() ? 1 : -1;
            }
        }
        if (!degenerate) return wn;
    }
    throw Error(Errc::LoopThroughPole, "winding number undefined");
}

namespace {

double segment_distance(cplx a, cplx b, cplx p) {
    cplx d = b - a;
    double n = std::norm(d);
    double t = n > 0 ? std::clamp(((p - a) * std::conj(d)).real() / n, 0.0, 1.0) : 0.0;
    return std::abs(a + t * d - p);
}

}  // namespace

cplx monodromy_of_loop(const FuchsianConnection& conn, const LoopPath& loop) {
    const auto& v = loop.vertices;
    if (v.size() < 3 || v.front() != v.back())
        throw Error(Errc::InvalidArgument, "loop must be closed with at least two edges");
    const auto& loc = conn.finite_locations();
    const auto& res = conn.finite_residues();
    cplx sum = 0.0;
    for (std::size_t j = 0; j < loc.size(); ++j) {
        for (std::size_t i = 0; i + 1 < v.size(); ++i)
            if (segment_distance(v[i], v[i + 1], loc[j]) <= 1e-9)
                throw Error(Errc::LoopThroughPole, "loop passes through a pole");
        if (res[j] == 0.0) continue;
        int w = winding_number(v, loc[j]);
        sum += double(loop.reversed ? -w : w) * res[j];
    }
    return std::exp(cplx(0.0, 2 * std::numbers::pi) * sum);
}

FuchsianConnection from_k_differential(const std::vector<Root>& numerator,
                                       const std::vector<Root>& denominator, int k) {
    if (k < 1) throw Error(Errc::InvalidArgument, "k must be positive");
    std::vector<PoleSpec> poles;
    std::vector<cplx> seen;
    auto add = [&](const Root& r, int sign) {
        if (r.order <= 0) throw Error(Errc::InvalidOrder, "root orders must be positive");
        for (auto s : seen)
            if (std::abs(s - r.location) <= kPoleEval)
                throw Error(Errc::DuplicateRoot, "root listed twice");
        seen.push_back(r.location);
        poles.push_back(pole(r.location, double(sign * r.order) / k));
    };
    for (const auto& r : numerator) add(r, 1);
    for (const auto& r : denominator) add(r, -1);
    return build_connection(std::move(poles));
}

}  // namespace connexion
