#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "connexion/connection.hpp"
#include "connexion/geodesic.hpp"
#include "connexion/omega.hpp"

namespace connexion {

struct InitialCondition {
    cplx z;
    cplx v;
    bool operator==(const InitialCondition&) const = default;
};

struct PoleEntry {
    bool at_infinity = false;
    cplx at;
    cplx residue;
    bool operator==(const PoleEntry&) const = default;
};

struct IntegratorConfig {
    double rtol = 1e-10;
    double atol = 1e-12;
    double integral_budget = 1e-11;
    double pole_floor = 1e-6;
    double max_step = 0;  // 0: unlimited
    bool operator==(const IntegratorConfig&) const = default;
};

struct BudgetConfig {
    double t_max = 50;
    std::uint64_t max_steps = 1000000;
    double wall_clock_s = 30;
    double recurrence_tol = 1e-8;
    bool operator==(const BudgetConfig&) const = default;
};

struct RenderConfig {
    cplx center;
    double half_width = 2;
    int width = 800;
    int height = 800;
    bool critical_rays = true;
    bool operator==(const RenderConfig&) const = default;
};

struct PortraitConfig {
    int rows = 7;
    int cols = 7;
    int directions = 1;  // launch directions per grid point
    bool operator==(const PortraitConfig&) const = default;
};

struct SceneConfig {
    std::vector<PoleEntry> poles;
    bool allow_complex = false;
    double switch_radius = 10;
    std::vector<InitialCondition> initial;
    IntegratorConfig integrator;
    BudgetConfig budget;
    RenderConfig render;
    PortraitConfig portrait;
    std::vector<double> local_residues{-0.5, 0.5, 1, 2.5};
    std::uint64_t seed = 1;
    bool operator==(const SceneConfig&) const = default;
};

/// Parses the JSON form. Errors are ConfigError with line and column for
/// syntax problems and a key path for schema problems.
SceneConfig parse_scene(const std::string& text);
SceneConfig load_scene(const std::string& path);
/// Every field written out; parse_scene(serialize_scene(c)) == c.
std::string serialize_scene(const SceneConfig& cfg);

/// Connection with the residue-sum gate applied.
FuchsianConnection scene_connection(const SceneConfig& cfg);
TraceOptions scene_trace_options(const SceneConfig& cfg);
ClassifyBudget scene_budget(const SceneConfig& cfg);

/// Human-readable validation summary: poles, residue sum, implied infinity,
/// poles outside the render window.
std::string validation_report(const SceneConfig& cfg, const FuchsianConnection& conn);

/// Machine-readable audit report as a JSON tree.
std::string audit_json(const AuditReport& report);

}  // namespace connexion
