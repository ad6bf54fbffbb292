/*
 Copyright 2026 The mfsb Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#include "mfsb/scenario_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace mfsb;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(MFSB_SOURCE_DIR) / "scenarios";

Json minimal()
{
    return Json::parse(R"({
      "grid": {"knots": 11},
      "system": {"n": 2, "m": 2, "A": [0, 0, 0, 0], "B": [1, 0, 0, 1], "D": [1, 0, 0, 1]},
      "rho0": [{"weight": 1.0, "mean": [0, 0], "cov_lower_triangle": [1, 0, 1]}],
      "rho1": [{"weight": 1.0, "mean": [1, 0], "cov_lower_triangle": [1, 0, 1]}]
    })");
}

std::string schema_path(const Json& doc)
{
    try {
        scenario_from_json(doc);
    } catch (const SchemaError& e) {
        return e.path();
    }
    return "<accepted>";
}

void expect_equivalent(const Scenario& a, const Scenario& b)
{
    ASSERT_EQ(a.grid.size(), b.grid.size());
    for (int k = 0; k < a.grid.size(); ++k) {
        EXPECT_LE((a.sys.A(k) - b.sys.A(k)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((a.sys.Abar(k) - b.sys.Abar(k)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((a.sys.B(k) - b.sys.B(k)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((a.sys.D(k) - b.sys.D(k)).cwiseAbs().maxCoeff(), 1e-12);
    }
    for (const auto& [x, y] : {std::pair{&a.rho0, &b.rho0}, std::pair{&a.rho1, &b.rho1}}) {
        ASSERT_EQ(x->size(), y->size());
        for (int i = 0; i < x->size(); ++i) {
            EXPECT_NEAR(x->weight(i), y->weight(i), 1e-12);
            EXPECT_LE((x->component(i).mean() - y->component(i).mean()).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LE((x->component(i).cov() - y->component(i).cov()).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
    ASSERT_EQ(a.obstacles.size(), b.obstacles.size());
    for (std::size_t o = 0; o < a.obstacles.size(); ++o)
        for (std::size_t f = 0; f < a.obstacles[o].faces.size(); ++f) {
            EXPECT_LE((a.obstacles[o].faces[f].a - b.obstacles[o].faces[f].a).norm(), 1e-12);
            EXPECT_NEAR(a.obstacles[o].faces[f].beta, b.obstacles[o].faces[f].beta, 1e-12);
        }
    ASSERT_EQ(a.routes.size(), b.routes.size());
    for (std::size_t r = 0; r < a.routes.size(); ++r) {
        EXPECT_EQ(a.routes[r].name, b.routes[r].name);
        EXPECT_EQ(a.routes[r].face_choice, b.routes[r].face_choice);
    }
    EXPECT_EQ(a.chance.total_budget, b.chance.total_budget);
    EXPECT_EQ(a.chance.per_face_budget, b.chance.per_face_budget);
    EXPECT_EQ(a.chance.window.begin, b.chance.window.begin);
    EXPECT_EQ(a.chance.window.end, b.chance.window.end);
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("mfsb_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(ScenarioParse, MinimalGetsDirectRoute)
{
    const auto scn = scenario_from_json(minimal());
    EXPECT_EQ(scn.num_routes(), 1);
    EXPECT_EQ(scn.routes[0].name, "direct");
    EXPECT_FALSE(scn.constrained());
    EXPECT_EQ(scn.sys.q(), 2);
    EXPECT_FALSE(scn.sys.has_meanfield());
}

TEST(ScenarioParse, NearlyNormalizedWeightsAreRenormalized)
{
    Json doc = minimal();
    doc["rho1"] = Json::parse(R"([{"weight": 0.5, "mean": [1, 0], "cov_lower_triangle": [1, 0, 1]},
                                  {"weight": 0.5000001, "mean": [2, 0], "cov_lower_triangle": [1, 0, 1]}])");
    const auto scn = scenario_from_json(doc);
    EXPECT_NEAR(scn.rho1.weight(0) + scn.rho1.weight(1), 1.0, 1e-15);
    doc["rho1"][1]["weight"] = 0.6;
    EXPECT_EQ(schema_path(doc), "rho1");
}

TEST(ScenarioParse, SchemaErrorsNameThePath)
{
    Json doc = minimal();
    doc["system"].erase("B");
    EXPECT_EQ(schema_path(doc), "system.B");

    doc = minimal();
    doc["rho0"][0]["mean"] = Json::array({0});
    EXPECT_EQ(schema_path(doc), "rho0[0].mean");

    doc = minimal();
    doc["grid"]["knots"] = "many";
    EXPECT_EQ(schema_path(doc), "grid.knots");

    doc = minimal();
    doc["system"]["A"] = Json::array({Json::array({0, 0, 0, 0})});
    EXPECT_EQ(schema_path(doc), "system.A");

    doc = minimal();
    doc["obstacles"] = Json::parse(R"([{"faces": [{"a": [1, 0], "beta": 0}]}])");
    EXPECT_EQ(schema_path(doc), "routes");
    doc["routes"] = Json::parse(R"([{"name": "r", "face_choice": [3]}])");
    EXPECT_EQ(schema_path(doc), "routes[0].face_choice[0]");
    doc["routes"][0]["face_choice"][0] = 0;
    EXPECT_EQ(schema_path(doc), "chance");
    doc["chance"] = Json::parse(R"({"per_face_budget": 0.7})");
    EXPECT_EQ(schema_path(doc), "chance.per_face_budget");
    doc["chance"] = Json::parse(R"({"total_budget": 0.05, "knot_window": [0.2, 0.8]})");
    EXPECT_EQ(schema_path(doc), "<accepted>");
}

TEST(ScenarioParse, NonPositiveDefiniteCovarianceNamesComponent)
{
    Json doc = minimal();
    doc["rho1"][0]["cov_lower_triangle"] = Json::array({1, 2, 1});
    try {
        scenario_from_json(doc);
        FAIL() << "expected a domain error";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("rho1[0]"), std::string::npos);
    }
}

TEST(ScenarioParse, InvalidJson)
{
    EXPECT_THROW(parse_scenario_text("{ not json"), SchemaError);
    EXPECT_THROW(parse_scenario("/nonexistent/scenario.json"), IoError);
}

TEST(ScenarioRoundTrip, BundledFixtures)
{
    for (const char* name : {"minimal", "problem1-like", "problem2-like-wide", "problem2-like-medium",
                             "problem2-like-narrow"}) {
        SCOPED_TRACE(name);
        const auto a = parse_scenario(kScenarios / (std::string(name) + ".json"));
        const auto b = parse_scenario_text(scenario_to_json(a).dump());
        expect_equivalent(a, b);
    }
}

TEST(ScenarioRoundTrip, PerKnotMatrices)
{
    std::vector<Mat> A, Z, B, D;
    for (int k = 0; k < 5; ++k) {
        A.push_back(Mat::Constant(2, 2, 0.1 * k));
        Z.push_back(Mat::Zero(2, 2));
        B.push_back(Mat::Identity(2, 2) * (1.0 + k / 3.0));
        D.push_back(Mat::Identity(2, 2));
    }
    Scenario scn = scenario_from_json(minimal());
    scn.sys = LTVSystem(A, Z, B, D);
    scn.grid = TimeGrid(5);
    const auto doc = scenario_to_json(scn);
    EXPECT_TRUE(doc["system"]["A"][0].is_array());
    expect_equivalent(scn, scenario_from_json(doc));
    EXPECT_THROW(with_knots(scn, 11), ConfigurationError);
}

TEST(Manifest, DigestMatchesKnownVector)
{
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Bundle, WriteIsDeterministicAndConsistent)
{
    const auto scn = with_knots(parse_scenario(kScenarios / "problem1-like.json"), 21);
    const auto res = solve_scenario(scn);
    const auto d1 = fresh_dir("bundle_a"), d2 = fresh_dir("bundle_b");
    const auto m1 = write_results({scn, res}, d1);
    const auto m2 = write_results({scn, res}, d2);
    ASSERT_EQ(m1.size(), m2.size());
    for (std::size_t i = 0; i < m1.size(); ++i) {
        EXPECT_EQ(m1[i].path, m2[i].path);
        EXPECT_EQ(m1[i].sha256, m2[i].sha256);
    }
    const Json summary = read_summary(d1);
    EXPECT_EQ(summary["predicted_max_violation"].get<double>(), 0.0);
    std::istringstream is(read_text(d1 / "plan.csv"));
    const auto [plan, J] = read_plan_csv(is, "plan.csv");
    EXPECT_NEAR(summary["cost_upper_bound"].get<double>(), plan_objective(plan.lambda, J), 1e-8);
    EXPECT_TRUE(fs::exists(d1 / "flow" / "knot_0020.csv"));
    EXPECT_TRUE(fs::exists(d1 / "manifest.json"));
}

TEST(Bundle, LoadReproducesPolicy)
{
    const auto scn = with_knots(parse_scenario(kScenarios / "problem1-like.json"), 21);
    const auto res = solve_scenario(scn);
    const auto dir = fresh_dir("bundle_load");
    write_results({scn, res}, dir);
    const auto loaded = load_solution(dir);
    EXPECT_NEAR(loaded.solution.bound(), res.solution.bound(), 1e-9 * res.solution.bound());
    const Vec x = (Vec(2) << 0.3, -0.2).finished();
    for (int k : {0, 7, 19})
        EXPECT_LE((policy_eval(loaded.solution, k, x) - policy_eval(res.solution, k, x)).norm(), 1e-9);
    for (int k = 0; k < 21; ++k) EXPECT_LE((loaded.solution.xbar[k] - res.solution.xbar[k]).norm(), 1e-14);
}

TEST(Bundle, UpdateSummaryRefreshesManifest)
{
    const auto scn = with_knots(parse_scenario(kScenarios / "minimal.json"), 11);
    const auto dir = fresh_dir("bundle_update");
    const auto before = write_results({scn, solve_scenario(scn)}, dir);
    const auto after = update_summary(dir, Json{{"gap", 0.5}});
    EXPECT_EQ(read_summary(dir)["gap"].get<double>(), 0.5);
    const auto find = [](const auto& m) {
        return std::find_if(m.begin(), m.end(), [](const auto& e) { return e.path == "summary.json"; })->sha256;
    };
    EXPECT_NE(find(before), find(after));
}
