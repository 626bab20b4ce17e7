#include "connexion/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <initializer_list>
#include <sstream>

#include "connexion/errors.hpp"
#include "json.hpp"

namespace connexion {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw Error(Errc::ConfigError, (path.empty() ? std::string("/") : path) + ": " + msg);
}

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : j.items()) {
        bool known = std::any_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; });
        if (!known) fail(path + "/" + k, "unknown key");
    }
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    double x = j.get<double>();
    if (!std::isfinite(x)) fail(path, "expected a finite number");
    return x;
}

std::uint64_t count(const json& j, const std::string& path) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
        fail(path, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

int positive_int(const json& j, const std::string& path) {
    std::uint64_t n = count(j, path);
    if (n == 0 || n > 100000) fail(path, "expected an integer in [1, 100000]");
    return int(n);
}

bool boolean(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
}

// a real number or [re, im]
cplx complex_value(const json& j, const std::string& path) {
    if (j.is_number()) return number(j, path);
    if (!j.is_array() || j.size() != 2) fail(path, "expected a number or [re, im]");
    return {number(j[0], path + "/0"), number(j[1], path + "/1")};
}

template <class F>
void optional(const json& j, const char* key, const std::string& path, F&& f) {
    if (j.contains(key)) f(j.at(key), path + "/" + key);
}

json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

std::string location_text(const PoleEntry& p) {
    if (p.at_infinity) return "inf";
    std::ostringstream os;
    os << std::setprecision(12) << p.at.real();
    if (p.at.imag() != 0.0) os << (p.at.imag() < 0 ? "" : "+") << p.at.imag() << "i";
    return os.str();
}

}  // namespace

SceneConfig parse_scene(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string what = e.what();
        auto at = what.find("syntax error");
        if (at != std::string::npos) what = what.substr(at);
        throw Error(Errc::ConfigError, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
    }

    SceneConfig cfg;
    only_keys(root, "", {"connection", "initial", "integrator", "budget", "render", "portrait", "verify", "seed"});
    if (!root.contains("connection")) fail("/connection", "missing");
    const json& c = root.at("connection");
    only_keys(c, "/connection", {"poles", "allow_complex", "switch_radius"});
    if (!c.contains("poles") || !c.at("poles").is_array()) fail("/connection/poles", "expected an array");
    const json& poles = c.at("poles");
    for (std::size_t i = 0; i < poles.size(); ++i) {
        const std::string path = "/connection/poles/" + std::to_string(i);
        only_keys(poles[i], path, {"at", "residue"});
        if (!poles[i].contains("at")) fail(path + "/at", "missing");
        if (!poles[i].contains("residue")) fail(path + "/residue", "missing");
        PoleEntry p;
        const json& at = poles[i].at("at");
        if (at.is_string()) {
            if (at.get<std::string>() != "inf") fail(path + "/at", "expected \"inf\", a number or [re, im]");
            p.at_infinity = true;
        } else {
            p.at = complex_value(at, path + "/at");
        }
        p.residue = complex_value(poles[i].at("residue"), path + "/residue");
        cfg.poles.push_back(p);
    }
    optional(c, "allow_complex", "/connection", [&](const json& j, const std::string& p) { cfg.allow_complex = boolean(j, p); });
    optional(c, "switch_radius", "/connection", [&](const json& j, const std::string& p) {
        cfg.switch_radius = number(j, p);
        if (!(cfg.switch_radius > 0)) fail(p, "must be positive");
    });

    optional(root, "initial", "", [&](const json& j, const std::string& path) {
        if (!j.is_array()) fail(path, "expected an array");
        for (std::size_t i = 0; i < j.size(); ++i) {
            const std::string p = path + "/" + std::to_string(i);
            only_keys(j[i], p, {"z", "v"});
            if (!j[i].contains("z") || !j[i].contains("v")) fail(p, "needs z and v");
            cfg.initial.push_back({complex_value(j[i].at("z"), p + "/z"), complex_value(j[i].at("v"), p + "/v")});
        }
    });
    optional(root, "integrator", "", [&](const json& j, const std::string& path) {
        only_keys(j, path, {"rtol", "atol", "integral_budget", "pole_floor", "max_step"});
        auto& o = cfg.integrator;
        optional(j, "rtol", path, [&](const json& x, const std::string& p) { o.rtol = number(x, p); });
        optional(j, "atol", path, [&](const json& x, const std::string& p) { o.atol = number(x, p); });
        optional(j, "integral_budget", path, [&](const json& x, const std::string& p) { o.integral_budget = number(x, p); });
        optional(j, "pole_floor", path, [&](const json& x, const std::string& p) { o.pole_floor = number(x, p); });
        optional(j, "max_step", path, [&](const json& x, const std::string& p) { o.max_step = number(x, p); });
        if (!(o.rtol > 0 && o.atol > 0 && o.integral_budget > 0 && o.pole_floor > 0 && o.max_step >= 0))
            fail(path, "tolerances must be positive");
    });
    optional(root, "budget", "", [&](const json& j, const std::string& path) {
        only_keys(j, path, {"t_max", "max_steps", "wall_clock_s", "recurrence_tol"});
        auto& b = cfg.budget;
        optional(j, "t_max", path, [&](const json& x, const std::string& p) { b.t_max = number(x, p); });
        optional(j, "max_steps", path, [&](const json& x, const std::string& p) { b.max_steps = count(x, p); });
        optional(j, "wall_clock_s", path, [&](const json& x, const std::string& p) { b.wall_clock_s = number(x, p); });
        optional(j, "recurrence_tol", path, [&](const json& x, const std::string& p) { b.recurrence_tol = number(x, p); });
        if (!(b.t_max > 0 && b.wall_clock_s > 0 && b.recurrence_tol > 0)) fail(path, "budgets must be positive");
    });
    optional(root, "render", "", [&](const json& j, const std::string& path) {
        only_keys(j, path, {"center", "half_width", "width", "height", "critical_rays"});
        auto& r = cfg.render;
        optional(j, "center", path, [&](const json& x, const std::string& p) { r.center = complex_value(x, p); });
        optional(j, "half_width", path, [&](const json& x, const std::string& p) {
            r.half_width = number(x, p);
            if (!(r.half_width > 0)) fail(p, "must be positive");
        });
        optional(j, "width", path, [&](const json& x, const std::string& p) { r.width = positive_int(x, p); });
        optional(j, "height", path, [&](const json& x, const std::string& p) { r.height = positive_int(x, p); });
        optional(j, "critical_rays", path, [&](const json& x, const std::string& p) { r.critical_rays = boolean(x, p); });
    });
    optional(root, "portrait", "", [&](const json& j, const std::string& path) {
        only_keys(j, path, {"rows", "cols", "directions"});
        auto& q = cfg.portrait;
        optional(j, "rows", path, [&](const json& x, const std::string& p) { q.rows = positive_int(x, p); });
        optional(j, "cols", path, [&](const json& x, const std::string& p) { q.cols = positive_int(x, p); });
        optional(j, "directions", path, [&](const json& x, const std::string& p) { q.directions = positive_int(x, p); });
    });
    optional(root, "verify", "", [&](const json& j, const std::string& path) {
        only_keys(j, path, {"local_residues"});
        optional(j, "local_residues", path, [&](const json& x, const std::string& p) {
            if (!x.is_array()) fail(p, "expected an array");
            cfg.local_residues.clear();
            for (std::size_t i = 0; i < x.size(); ++i) cfg.local_residues.push_back(number(x[i], p + "/" + std::to_string(i)));
        });
    });
    optional(root, "seed", "", [&](const json& j, const std::string& p) { cfg.seed = count(j, p); });
    return cfg;
}

SceneConfig load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::ConfigError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scene(ss.str());
}

std::string serialize_scene(const SceneConfig& cfg) {
    json poles = json::array();
    for (const auto& p : cfg.poles)
        poles.push_back({{"at", p.at_infinity ? json("inf") : complex_json(p.at)}, {"residue", complex_json(p.residue)}});
    json initial = json::array();
    for (const auto& ic : cfg.initial) initial.push_back({{"z", complex_json(ic.z)}, {"v", complex_json(ic.v)}});
    const auto& o = cfg.integrator;
    const auto& b = cfg.budget;
    const auto& r = cfg.render;
    json root = {
        {"connection", {{"poles", poles}, {"allow_complex", cfg.allow_complex}, {"switch_radius", cfg.switch_radius}}},
        {"initial", initial},
        {"integrator",
         {{"rtol", o.rtol}, {"atol", o.atol}, {"integral_budget", o.integral_budget}, {"pole_floor", o.pole_floor}, {"max_step", o.max_step}}},
        {"budget", {{"t_max", b.t_max}, {"max_steps", b.max_steps}, {"wall_clock_s", b.wall_clock_s}, {"recurrence_tol", b.recurrence_tol}}},
        {"render",
         {{"center", complex_json(r.center)}, {"half_width", r.half_width}, {"width", r.width}, {"height", r.height}, {"critical_rays", r.critical_rays}}},
        {"portrait", {{"rows", cfg.portrait.rows}, {"cols", cfg.portrait.cols}, {"directions", cfg.portrait.directions}}},
        {"verify", {{"local_residues", cfg.local_residues}}},
        {"seed", cfg.seed},
    };
    return root.dump(2) + "\n";
}

FuchsianConnection scene_connection(const SceneConfig& cfg) {
    std::vector<PoleSpec> specs;
    for (const auto& p : cfg.poles) specs.push_back(p.at_infinity ? pole_at_infinity(p.residue) : pole(p.at, p.residue));
    BuildOptions bo;
    bo.allow_complex = cfg.allow_complex;
    bo.switch_radius = cfg.switch_radius;
    return build_connection(std::move(specs), bo);
}

TraceOptions scene_trace_options(const SceneConfig& cfg) {
    TraceOptions o;
    o.rtol = cfg.integrator.rtol;
    o.atol = cfg.integrator.atol;
    o.integral_budget = cfg.integrator.integral_budget;
    o.pole_floor = cfg.integrator.pole_floor;
    if (cfg.integrator.max_step > 0) o.max_step = cfg.integrator.max_step;
    o.max_steps = cfg.budget.max_steps;
    o.wall_clock_s = cfg.budget.wall_clock_s;
    return o;
}

ClassifyBudget scene_budget(const SceneConfig& cfg) {
    ClassifyBudget b;
    b.t_max = cfg.budget.t_max;
    b.max_steps = cfg.budget.max_steps;
    b.wall_clock_s = cfg.budget.wall_clock_s;
    b.recurrence_tol = cfg.budget.recurrence_tol;
    b.trace = scene_trace_options(cfg);
    return b;
}

std::string validation_report(const SceneConfig& cfg, const FuchsianConnection& conn) {
    std::ostringstream os;
    os << std::setprecision(12);
    cplx sum = 0;
    for (const auto& p : cfg.poles) sum += p.residue;
    os << "poles " << conn.poles().size() << "\n";
    for (const auto& p : conn.poles()) {
        PoleEntry e{p.location.is_infinity(), p.location.is_infinity() ? cplx{} : p.location.z(), p.residue};
        os << "  " << location_text(e) << " residue " << p.residue.real();
        if (p.residue.imag() != 0.0) os << (p.residue.imag() < 0 ? "" : "+") << p.residue.imag() << "i";
        if (!e.at_infinity && std::abs(e.at - cfg.render.center) > 0) {
            cplx d = e.at - cfg.render.center;
            if (std::max(std::abs(d.real()), std::abs(d.imag())) > cfg.render.half_width) os << " (outside the render window)";
        }
        if (e.at_infinity) os << " (shown in the inset chart)";
        os << "\n";
    }
    bool explicit_inf = std::any_of(cfg.poles.begin(), cfg.poles.end(), [](const PoleEntry& p) { return p.at_infinity; });
    os << "residue sum " << conn.residue_sum().real() << (explicit_inf ? "" : " (infinity completed)") << "\n";
    os << "real periods " << (conn.real_residues() ? "yes" : "no") << "\n";
    os << "initial conditions " << cfg.initial.size() << "\n";
    return os.str();
}

std::string audit_json(const AuditReport& report) {
    json recs = json::array();
    for (const auto& r : report.records) {
        json poles = json::array();
        for (const auto& p : r.poles)
            poles.push_back({{"at", p.location.is_infinity() ? json("inf") : complex_json(p.location.z())},
                             {"residue", complex_json(p.residue)}});
        recs.push_back({{"index", r.index},
                        {"seed", r.seed},
                        {"poles", poles},
                        {"z0", complex_json(r.z0)},
                        {"v0", complex_json(r.v0)},
                        {"verdict", to_string(r.verdict.tag)},
                        {"label", r.label},
                        {"details", r.verdict.details},
                        {"reason", to_string(r.verdict.reason)},
                        {"steps", r.verdict.steps},
                        {"t_reached", r.verdict.t_reached},
                        {"simple", r.simple},
                        {"real_periods", r.real_periods},
                        {"anomaly", r.anomaly}});
    }
    json root = {{"seed", report.seed},
                 {"samples", report.records.size()},
                 {"counted", report.counted},
                 {"anomalies", report.anomalies},
                 {"records", recs}};
    return root.dump(2) + "\n";
}

}  // namespace connexion
