// Command-line front end: validate, trace, classify, portrait, verify, audit.

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "connexion/errors.hpp"
#include "connexion/omega.hpp"
#include "connexion/render.hpp"
#include "connexion/scene.hpp"
#include "connexion/verify.hpp"

using namespace connexion;

namespace {

enum Exit { Ok = 0, ConfigFailure = 2, NumericalFailure = 3, VerifyFailure = 4 };

struct Failure {
    int code;
    std::string message;
};

bool config_code(Errc e) {
    switch (e) {
        case Errc::ConfigError:
        case Errc::InvalidArgument:
        case Errc::SumMismatch:
        case Errc::DuplicatePole:
        case Errc::NonRealResidue:
        case Errc::NonRealResidues:
        case Errc::StartAtPole:
        case Errc::ZeroVelocity:
            return true;
        default:
            return false;
    }
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Failure{ConfigFailure, "cannot write " + path};
    out << text;
}

// out.csv -> out_2.csv for the k-th of several trajectories
std::string numbered(const std::string& path, std::size_t k, std::size_t n) {
    if (n <= 1) return path;
    auto dot = path.find_last_of('.');
    auto slash = path.find_last_of('/');
    std::string tag = "_" + std::to_string(k + 1);
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + tag;
    return path.substr(0, dot) + tag + path.substr(dot);
}

// Integration stopped early for a reason other than reaching a pole.
bool failed_early(const Trajectory& tr, double t_max) {
    bool bad = tr.reason == Termination::NonFinite || tr.reason == Termination::StepBudget ||
               tr.reason == Termination::WallClock || (tr.reason == Termination::StepCollapse && tr.pole_hit < 0);
    return bad && tr.t_end() - tr.t_begin() < 0.01 * t_max;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string point_text(cplx z) { return "(" + fmt("%.9g", z.real()) + ", " + fmt("%.9g", z.imag()) + ")"; }

struct Options {
    std::string config;
    std::string out;
    std::string svg;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> budget_steps;
    std::string suite = "local";
    std::string format = "text";
    std::size_t samples = 200;
};

SceneConfig load(const Options& o) {
    if (o.config.empty()) throw Failure{ConfigFailure, "--config is required"};
    SceneConfig cfg = load_scene(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.budget_steps) cfg.budget.max_steps = *o.budget_steps;
    return cfg;
}

void render_to(const std::string& path, RenderScene scene, const FuchsianConnection& conn, const SceneConfig& cfg) {
    if (path.empty()) return;
    if (cfg.render.critical_rays) add_critical_rays(scene, conn);
    write_file(path, render_svg(scene));
}

int run_validate(const Options& o) {
    SceneConfig cfg = load(o);
    FuchsianConnection conn = scene_connection(cfg);
    for (const auto& ic : cfg.initial) make_state(conn, ic.z, ic.v);
    std::cout << validation_report(cfg, conn);
    return Ok;
}

int run_trace(const Options& o) {
    SceneConfig cfg = load(o);
    FuchsianConnection conn = scene_connection(cfg);
    if (cfg.initial.empty()) throw Failure{ConfigFailure, "/initial: no initial conditions"};
    TraceOptions topts = scene_trace_options(cfg);
    RenderScene scene = make_render_scene(cfg.render, conn);
    int code = Ok;
    for (std::size_t k = 0; k < cfg.initial.size(); ++k) {
        const auto& ic = cfg.initial[k];
        Trajectory tr = trace(conn, make_state(conn, ic.z, ic.v), cfg.budget.t_max, topts);
        FirstIntegral fi = first_integral(tr);
        std::cout << "trajectory " << k + 1 << ": " << to_string(tr.reason) << " at t=" << fmt("%.9g", tr.t_end())
                  << ", steps " << tr.accepted << ", end " << point_text(standard_position(tr.samples.back().state))
                  << ", drift " << fmt("%.3e", fi.max_relative_drift) << "\n";
        if (!o.out.empty()) {
            std::ostringstream csv;
            write_csv(csv, tr);
            write_file(numbered(o.out, k, cfg.initial.size()), csv.str());
        }
        add_trajectory(scene, tr);
        if (failed_early(tr, cfg.budget.t_max)) {
            std::cerr << "numerical failure: trajectory " << k + 1 << " stopped with " << to_string(tr.reason)
                      << " at t=" << tr.t_end() << "\n";
            code = NumericalFailure;
        }
    }
    render_to(o.svg, std::move(scene), conn, cfg);
    return code;
}

int run_classify(const Options& o) {
    SceneConfig cfg = load(o);
    FuchsianConnection conn = scene_connection(cfg);
    if (cfg.initial.empty()) throw Failure{ConfigFailure, "/initial: no initial conditions"};
    ClassifyBudget budget = scene_budget(cfg);
    RenderScene scene = make_render_scene(cfg.render, conn);
    int code = Ok;
    for (std::size_t k = 0; k < cfg.initial.size(); ++k) {
        const auto& ic = cfg.initial[k];
        Classification cl = classify_full(conn, make_state(conn, ic.z, ic.v), budget);
        const OmegaVerdict& v = cl.verdict;
        std::cout << "trajectory " << k + 1 << ": " << describe(v, conn) << "\n";
        if (!v.details.empty()) std::cout << "  details: " << v.details << "\n";
        std::cout << "  budget: " << to_string(v.reason) << " at t=" << fmt("%.9g", v.t_reached) << ", steps "
                  << v.steps << "\n";
        add_trajectory(scene, cl.trajectory, v.tag == OmegaTag::Periodic ? v.period : 0.0);
        if (v.tag == OmegaTag::Undetermined && failed_early(cl.trajectory, budget.t_max)) code = NumericalFailure;
    }
    render_to(o.svg, std::move(scene), conn, cfg);
    return code;
}

int run_portrait(const Options& o) {
    SceneConfig cfg = load(o);
    FuchsianConnection conn = scene_connection(cfg);
    ClassifyBudget budget = scene_budget(cfg);
    const auto& pc = cfg.portrait;
    const auto& view = cfg.render;

    struct Job {
        cplx z, v;
    };
    std::vector<Job> jobs;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
    for (int r = 0; r < pc.rows; ++r)
        for (int c = 0; c < pc.cols; ++c) {
            double x = pc.cols == 1 ? 0.0 : -1.0 + 2.0 * (c + 0.5) / pc.cols;
            double y = pc.rows == 1 ? 0.0 : 1.0 - 2.0 * (r + 0.5) / pc.rows;
            cplx z = view.center + view.half_width * cplx(x, y);
            for (int d = 0; d < pc.directions; ++d) jobs.push_back({z, std::polar(1.0, angle(rng))});
        }

    std::vector<std::optional<Classification>> results(jobs.size());
    std::vector<std::string> skipped(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            try {
                results[i] = classify_full(conn, make_state(conn, jobs[i].z, jobs[i].v), budget);
            } catch (const Error& e) {
                skipped[i] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    unsigned n = std::min<unsigned>(worker_count(), std::max<std::size_t>(1, jobs.size()));
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    RenderScene scene = make_render_scene(view, conn);
    scene.title = "portrait";
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        std::cout << point_text(jobs[i].z) << " dir " << fmt("%.6f", std::arg(jobs[i].v)) << ": ";
        if (!results[i]) {
            std::cout << "skipped (" << skipped[i] << ")\n";
            continue;
        }
        const OmegaVerdict& v = results[i]->verdict;
        std::cout << describe(v, conn) << "\n";
        add_trajectory(scene, results[i]->trajectory, v.tag == OmegaTag::Periodic ? v.period : 0.0);
    }
    render_to(o.svg, std::move(scene), conn, cfg);
    return Ok;
}

int run_verify(const Options& o) {
    std::vector<CheckResult> checks;
    if (o.suite == "local") {
        std::vector<double> residues = SceneConfig{}.local_residues;
        std::uint64_t seed = o.seed.value_or(1);
        if (!o.config.empty()) {
            SceneConfig cfg = load(o);
            residues = cfg.local_residues;
            seed = cfg.seed;
        }
        checks = verify_local(residues, seed);
    } else if (o.suite == "teichmuller") {
        SceneConfig cfg = load(o);
        checks = verify_teichmuller(scene_connection(cfg), cfg.seed);
    } else {
        SceneConfig cfg = load(o);
        checks = verify_saddles(scene_connection(cfg));
    }
    std::cout << format_checks(checks);
    for (const auto& c : checks)
        if (!c.passed) {
            std::cerr << "verification failed: " << c.name << "\n";
            return VerifyFailure;
        }
    return Ok;
}

int run_audit(const Options& o) {
    AuditOptions opts;
    opts.samples = o.samples;
    opts.seed = o.seed.value_or(1);
    if (!o.config.empty()) {
        SceneConfig cfg = load(o);
        opts.seed = cfg.seed;
        opts.budget = scene_budget(cfg);
    } else if (o.budget_steps) {
        opts.budget.max_steps = *o.budget_steps;
    }
    AuditReport report = exclusion_audit(random_real_generator(), opts);
    std::string text = o.format == "json" ? audit_json(report) : report.text();
    if (o.out.empty())
        std::cout << text;
    else
        write_file(o.out, text);
    if (report.anomalies > 0) {
        std::cerr << "audit found " << report.anomalies << " anomalies\n";
        return VerifyFailure;
    }
    return Ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Geodesics of Fuchsian meromorphic connections on the sphere"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config,-c", o.config, "scene file (JSON)");
        if (config_required) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the seed");
        sub->add_option("--budget-steps", o.budget_steps, "override the step budget");
    };
    auto* validate = app.add_subcommand("validate", "check a scene file and report the connection");
    common(validate, true);
    auto* tr = app.add_subcommand("trace", "integrate the initial conditions");
    common(tr, true);
    tr->add_option("--out,-o", o.out, "CSV output (numbered per trajectory when several)");
    tr->add_option("--svg", o.svg, "SVG output");
    auto* cl = app.add_subcommand("classify", "omega-limit verdict for each initial condition");
    common(cl, true);
    cl->add_option("--svg", o.svg, "SVG output");
    auto* po = app.add_subcommand("portrait", "classify a grid of starts over the render window");
    common(po, true);
    po->add_option("--svg", o.svg, "SVG output");
    auto* ve = app.add_subcommand("verify", "numerical checks against closed forms");
    common(ve, false);
    ve->add_option("suite", o.suite, "local, teichmuller or saddles")
        ->check(CLI::IsMember({"local", "teichmuller", "saddles"}));
    auto* au = app.add_subcommand("audit", "random connections, looking for excluded verdicts");
    common(au, false);
    au->add_option("--samples", o.samples, "number of random connections");
    au->add_option("--format", o.format, "text or json")->check(CLI::IsMember({"text", "json"}));
    au->add_option("--out,-o", o.out, "report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? Ok : ConfigFailure;
    }

    try {
        if (*validate) return run_validate(o);
        if (*tr) return run_trace(o);
        if (*cl) return run_classify(o);
        if (*po) return run_portrait(o);
        if (*ve) return run_verify(o);
        if (*au) return run_audit(o);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << "\n";
        return f.code;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_code(e.code()) ? ConfigFailure : NumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return NumericalFailure;
    }
    return Ok;
}
