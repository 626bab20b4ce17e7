#include <cmath>
#include <numbers>
#include <regex>
#include <sstream>

#include "connexion/errors.hpp"
#include "connexion/render.hpp"
#include "connexion/scene.hpp"
#include "doctest.h"

using namespace connexion;

namespace {

const char* kCircle = R"({
  "connection": {"poles": [{"at": [0, 0], "residue": -1}]},
  "initial": [{"z": [1, 0], "v": [0, 1]}],
  "budget": {"t_max": 50}
})";

std::string config_error(const std::string& text) {
    try {
        parse_scene(text);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ConfigError);
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("scene round trip") {
    SceneConfig cfg;
    cfg.poles = {{false, {0.25, -1}, {0.5, 0}}, {false, {-1, 0}, {0.5, 0}}, {true, {}, {-3, 0}}};
    cfg.switch_radius = 8;
    cfg.initial = {{{0, 0.5}, {1, 0.1}}, {{0.1, 0.2}, {0, 1}}};
    cfg.integrator.rtol = 1e-9;
    cfg.integrator.max_step = 0.5;
    cfg.budget.t_max = 77.5;
    cfg.budget.max_steps = 12345;
    cfg.render.center = {0.5, -0.25};
    cfg.render.width = 640;
    cfg.render.critical_rays = false;
    cfg.portrait = {3, 4, 2};
    cfg.local_residues = {-0.75, 3};
    cfg.seed = 99;
    const std::string text = serialize_scene(cfg);
    CHECK(parse_scene(text) == cfg);
    CHECK(serialize_scene(parse_scene(text)) == text);
    CHECK(parse_scene(serialize_scene(SceneConfig{})) == SceneConfig{});
}

TEST_CASE("scene errors name the place") {
    std::string syntax = config_error("{\n  \"connection\": {\"poles\": []\n  \"seed\": 1\n}\n");
    CHECK(syntax.find("line 3, column") != std::string::npos);

    std::string unknown = config_error(R"({"connection": {"poles": [], "colour": 1}})");
    CHECK(unknown.find("/connection") != std::string::npos);
    CHECK(unknown.find("colour") != std::string::npos);

    std::string type = config_error(R"({"connection": {"poles": [{"at": [0, 0], "residue": "x"}]}})");
    CHECK(type.find("/connection/poles/0/residue") != std::string::npos);
}

TEST_CASE("scene residue gate") {
    SceneConfig cfg = parse_scene(R"({"connection": {"poles": [{"at": [0, 0], "residue": -1},
                                                              {"at": "inf", "residue": -0.9}]}})");
    try {
        scene_connection(cfg);
        FAIL("sum accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SumMismatch);
        CHECK(std::string(e.what()).find("-1.9") != std::string::npos);
        CHECK(std::string(e.what()).find("requires -2") != std::string::npos);
    }
    FuchsianConnection conn = scene_connection(parse_scene(kCircle));
    CHECK(conn.has_infinity_pole());
    CHECK(conn.residue_at_infinity() == cplx(-1, 0));
}

TEST_CASE("circle scene renders one closed polyline, byte for byte") {
    SceneConfig cfg = parse_scene(kCircle);
    FuchsianConnection conn = scene_connection(cfg);
    auto render = [&] {
        Classification cl = classify_full(conn, make_state(conn, cfg.initial[0].z, cfg.initial[0].v), scene_budget(cfg));
        REQUIRE(cl.verdict.tag == OmegaTag::Periodic);
        RenderScene scene = make_render_scene(cfg.render, conn);
        add_trajectory(scene, cl.trajectory, cl.verdict.period);
        return render_svg(scene);
    };
    const std::string svg = render();
    CHECK(svg == render());

    std::regex line(R"(<polyline[^>]*points="([^"]*)\")");
    auto it = std::sregex_iterator(svg.begin(), svg.end(), line);
    REQUIRE(std::distance(it, std::sregex_iterator()) == 1);
    CHECK(svg.find("class=\"closed\"") != std::string::npos);

    // every vertex on the circle of radius 200 px about the centre, first == last
    std::istringstream pts((*it)[1].str());
    std::string tok, first, last;
    double worst = 0;
    while (pts >> tok) {
        if (first.empty()) first = tok;
        last = tok;
        double x = std::stod(tok.substr(0, tok.find(','))), y = std::stod(tok.substr(tok.find(',') + 1));
        worst = std::max(worst, std::abs(std::hypot(x - 400, y - 400) - 200));
        CHECK(tok.substr(tok.find(',') + 1).size() - tok.substr(tok.find(',') + 1).find('.') == 7);
    }
    CHECK(first == last);
    CHECK(worst < 1e-5);
    // the pole at infinity sits at the inset centre
    CHECK(svg.find(">inf -1<") != std::string::npos);
}
