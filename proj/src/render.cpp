#include "connexion/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "connexion/errors.hpp"
#include "connexion/local.hpp"

namespace connexion {

namespace {

const char* const kPalette[] = {"#1f4e9c", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#117a8b"};

std::string fx(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

std::string short_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

bool finite_point(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

struct Frame {
    double W, H, s;
    cplx c;
    // inset for |z| > r_in, drawn through w = 1/z
    double r_in, inset_size, ix, iy;

    explicit Frame(const RenderConfig& v)
        : W(v.width), H(v.height), s(std::min(v.width, v.height) / (2.0 * v.half_width)), c(v.center) {
        r_in = std::abs(v.center) + std::numbers::sqrt2 * v.half_width;
        inset_size = std::round(0.28 * std::min(W, H));
        ix = W - 8.0 - inset_size / 2;
        iy = 8.0 + inset_size / 2;
    }
    std::pair<double, double> main(cplx z) const {
        return {W / 2 + (z.real() - c.real()) * s, H / 2 - (z.imag() - c.imag()) * s};
    }
    bool in_main(cplx z) const {
        if (!finite_point(z)) return false;
        auto [x, y] = main(z);
        return x > -W && x < 2 * W && y > -H && y < 2 * H;
    }
    std::pair<double, double> inset(cplx w) const {
        double k = inset_size / 2 * r_in;
        return {ix + w.real() * k, iy - w.imag() * k};
    }
    bool in_inset(cplx z) const { return finite_point(z) && std::abs(z) > r_in; }
};

// Consecutive runs of drawable points, each at least two points long.
template <class Keep, class Map>
void emit_runs(std::ostringstream& os, const RenderPolyline& line, Keep keep, Map map, const std::string& attrs) {
    std::vector<std::pair<double, double>> run;
    bool whole = true;
    auto flush = [&](bool close) {
        if (run.size() >= 2) {
            if (close) run.push_back(run.front());
            os << "<polyline" << attrs << " points=\"";
            for (std::size_t i = 0; i < run.size(); ++i) os << (i ? " " : "") << fx(run[i].first) << "," << fx(run[i].second);
            os << "\"/>\n";
        }
        run.clear();
    };
    for (cplx z : line.points) {
        if (keep(z)) {
            run.push_back(map(z));
        } else {
            whole = false;
            flush(false);
        }
    }
    flush(line.closed && whole);
}

std::string pole_label(const PoleSpec& p) {
    std::string s = short_number(p.residue.real());
    if (p.residue.imag() != 0.0) s += (p.residue.imag() < 0 ? "" : "+") + short_number(p.residue.imag()) + "i";
    return s;
}

}  // namespace

RenderScene make_render_scene(const RenderConfig& view, const FuchsianConnection& conn) {
    RenderScene scene;
    scene.view = view;
    for (const auto& p : conn.poles())
        if (p.residue != 0.0) scene.poles.push_back({p.location, pole_label(p)});
    return scene;
}

void add_trajectory(RenderScene& scene, const Trajectory& traj, double period) {
    // long steps are subdivided through the interpolant so arcs stay smooth
    const std::size_t n = traj.samples.size();
    const int sub = int(std::clamp<std::size_t>(n ? 4000 / n : 1, 1, 16));
    const double t_end = period > 0 ? traj.t_begin() + period : traj.t_end();
    RenderPolyline line;
    for (std::size_t i = 0; i < n && traj.samples[i].t < t_end; ++i) {
        line.points.push_back(standard_position(traj.samples[i].state));
        if (i + 1 == n) break;
        const double a = traj.samples[i].t, b = std::min(traj.samples[i + 1].t, t_end);
        for (int k = 1; k < sub; ++k) line.points.push_back(standard_position(state_at(traj, a + (b - a) * k / sub)));
    }
    if (period > 0) {
        line.points.push_back(standard_position(state_at(traj, t_end)));
        line.closed = true;
    }
    scene.trajectories.push_back(std::move(line));
}

void add_critical_rays(RenderScene& scene, const FuchsianConnection& conn, int per_pole) {
    for (const auto& p : conn.poles()) {
        if (p.residue.imag() != 0.0 || p.residue.real() <= -1.0 || p.residue == 0.0) continue;
        AdaptedChart ch;
        try {
            ch = adapted_chart(conn, p.location);
        } catch (const Error&) {
            continue;
        }
        for (int k = 0; k < per_pole; ++k) {
            RenderPolyline ray;
            cplx e = std::polar(1.0, 2 * std::numbers::pi * k / per_pole);
            for (int i = 0; i <= 32; ++i) {
                cplx x = ch.inverse(0.9 * ch.radius * i / 32.0 * e);
                ray.points.push_back(ch.source == Chart::Standard ? x : (x == 0.0 ? cplx(INFINITY, 0) : 1.0 / x));
            }
            scene.rays.push_back(std::move(ray));
        }
    }
}

std::string render_svg(const RenderScene& scene) {
    const Frame f(scene.view);
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << scene.view.width << "\" height=\"" << scene.view.height
       << "\" viewBox=\"0 0 " << scene.view.width << " " << scene.view.height << "\">\n";
    if (!scene.title.empty()) os << "<title>" << scene.title << "</title>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    os << "<clipPath id=\"window\"><rect x=\"0\" y=\"0\" width=\"" << scene.view.width << "\" height=\"" << scene.view.height
       << "\"/></clipPath>\n";

    auto main_keep = [&](cplx z) { return f.in_main(z); };
    auto main_map = [&](cplx z) { return f.main(z); };
    auto layer = [&](const char* id, const std::vector<RenderPolyline>& lines, const char* stroke, const char* width,
                     bool cycle) {
        os << "<g id=\"" << id << "\" clip-path=\"url(#window)\" fill=\"none\" stroke-width=\"" << width << "\">\n";
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::string attrs = std::string(" stroke=\"") + (cycle ? kPalette[i % 6] : stroke) + "\"";
            if (lines[i].closed) attrs += " class=\"closed\"";
            emit_runs(os, lines[i], main_keep, main_map, attrs);
        }
        os << "</g>\n";
    };
    layer("polygons", scene.polygons, "#555555", "1.5", false);
    layer("rays", scene.rays, "#999999", "0.8", false);
    layer("trajectories", scene.trajectories, "", "1.2", true);
    layer("sections", scene.sections, "#d4ac0d", "2", false);

    os << "<g id=\"poles\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (const auto& p : scene.poles) {
        if (p.at.is_infinity() || !f.in_main(p.at.z()) || f.in_inset(p.at.z())) continue;
        auto [x, y] = f.main(p.at.z());
        os << "<circle cx=\"" << fx(x) << "\" cy=\"" << fx(y) << "\" r=\"3.500000\" fill=\"#000000\"/>\n";
        os << "<text x=\"" << fx(x + 5) << "\" y=\"" << fx(y - 5) << "\">" << p.label << "</text>\n";
    }
    os << "</g>\n";

    // w = 1/z around infinity
    const double half = f.inset_size / 2;
    os << "<g id=\"inset\" font-family=\"sans-serif\" font-size=\"10\">\n";
    os << "<rect x=\"" << fx(f.ix - half) << "\" y=\"" << fx(f.iy - half) << "\" width=\"" << fx(f.inset_size)
       << "\" height=\"" << fx(f.inset_size) << "\" fill=\"#f7f7f7\" stroke=\"#333333\"/>\n";
    os << "<circle cx=\"" << fx(f.ix) << "\" cy=\"" << fx(f.iy) << "\" r=\"" << fx(half) << "\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
    os << "<text x=\"" << fx(f.ix - half + 4) << "\" y=\"" << fx(f.iy - half + 12) << "\">w = 1/z, |z| &gt; " << short_number(f.r_in)
       << "</text>\n";
    auto inset_keep = [&](cplx z) { return f.in_inset(z); };
    auto inset_map = [&](cplx z) { return f.inset(1.0 / z); };
    os << "<g fill=\"none\" stroke-width=\"1\">\n";
    for (std::size_t i = 0; i < scene.trajectories.size(); ++i)
        emit_runs(os, scene.trajectories[i], inset_keep, inset_map, std::string(" stroke=\"") + kPalette[i % 6] + "\"");
    os << "</g>\n";
    for (const auto& p : scene.poles) {
        cplx w;
        if (p.at.is_infinity()) {
            w = 0.0;
        } else if (f.in_inset(p.at.z())) {
            w = 1.0 / p.at.z();
        } else {
            continue;
        }
        auto [x, y] = f.inset(w);
        os << "<circle cx=\"" << fx(x) << "\" cy=\"" << fx(y) << "\" r=\"3.000000\" fill=\"#000000\"/>\n";
        os << "<text x=\"" << fx(x + 4) << "\" y=\"" << fx(y - 4) << "\">" << (p.at.is_infinity() ? "inf " : "") << p.label
           << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

}  // namespace connexion
