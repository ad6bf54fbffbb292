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
#include "mfsb/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace mfsb;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(MFSB_SOURCE_DIR) / "scenarios";

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "mfsb");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("mfsb_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::string scenario(const std::string& name) { return (kScenarios / (name + ".json")).string(); }

fs::path write_file(const std::string& name, const std::string& text)
{
    const fs::path p = fs::temp_directory_path() / ("mfsb_cli_" + name);
    write_text(p, text);
    return p;
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError)
{
    const auto r = invoke({"solve", "--scenario", scenario("minimal"), "--out", "x", "--frobnicate"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE((r.out + r.err).find("Usage:"), std::string::npos);
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"solve", "--out", "x"}).code, 2);
    EXPECT_EQ(invoke({"solve", "--scenario", "/nonexistent.json", "--out", "x"}).code, 2);
    EXPECT_EQ(invoke({"solve", "--scenario", scenario("minimal"), "--out", "x", "--knots", "1"}).code, 2);
    EXPECT_EQ(invoke({"gap", "--solution", "/nonexistent"}).code, 2);
}

TEST(Cli, HelpDocumentsEveryFlag)
{
    const std::map<std::string, std::vector<std::string>> flags{
        {"solve", {"--scenario", "--out", "--knots", "--tol", "--max-iters", "--threads"}},
        {"simulate", {"--scenario", "--solution", "--agents", "--seed", "--trajectory-stride", "--threads"}},
        {"gap", {"--solution", "--samples", "--seed"}},
        {"separation-study", {"--scenario", "--scales", "--samples", "--seed", "--knots", "--tol", "--csv"}},
        {"report", {"--out"}}};
    for (const auto& [cmd, names] : flags) {
        const auto r = invoke({cmd, "--help"});
        EXPECT_EQ(r.code, 0) << cmd;
        for (const auto& f : names) EXPECT_NE(r.out.find(f), std::string::npos) << cmd << " " << f;
    }
}

TEST(Cli, SchemaErrorIsReportedWithPath)
{
    const auto bad = write_file("bad.json", R"({"grid": {"knots": 5}, "system": {"n": 1, "m": 1}})");
    const auto r = invoke({"solve", "--scenario", bad.string(), "--out", fresh_dir("bad").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("system.A"), std::string::npos);
}

TEST(Cli, ContradictoryRouteIsInfeasible)
{
    const auto doc = write_file("infeasible.json", R"({
      "grid": {"knots": 11},
      "system": {"n": 2, "m": 2, "A": [0, 0, 0, 0], "B": [1, 0, 0, 1], "D": [0.1, 0, 0, 0.1]},
      "rho0": [{"weight": 1.0, "mean": [-2, 0], "cov_lower_triangle": [0.1, 0, 0.1]}],
      "rho1": [{"weight": 1.0, "mean": [2, 0], "cov_lower_triangle": [0.1, 0, 0.1]}],
      "obstacles": [{"faces": [{"a": [1, 0], "beta": -1}]}, {"faces": [{"a": [-1, 0], "beta": -1}]}],
      "routes": [{"name": "nowhere", "face_choice": [0, 0]}],
      "chance": {"per_face_budget": 0.01, "knot_window": [0.4, 0.6]}
    })");
    const auto r = invoke({"solve", "--scenario", doc.string(), "--out", fresh_dir("infeasible").string()});
    EXPECT_EQ(r.code, 1) << r.err;
    EXPECT_NE(r.err.find("infeasible"), std::string::npos);
}

TEST(Cli, SolveSimulateGapReport)
{
    const auto dir = fresh_dir("pipeline");
    const std::string scn = scenario("problem1-like");
    auto r = invoke({"solve", "--scenario", scn, "--out", dir.string(), "--knots", "31", "--threads", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("status: optimal"), std::string::npos);
    ASSERT_TRUE(fs::exists(dir / "summary.json"));

    r = invoke({"simulate", "--scenario", scn, "--solution", dir.string(), "--agents", "2000", "--seed", "5"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("J_hat <= J_OT + 3 se: "), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "trajectories.csv"));

    r = invoke({"gap", "--solution", dir.string(), "--samples", "5000", "--seed", "5"});
    ASSERT_EQ(r.code, 0) << r.err;

    const Json s = read_summary(dir);
    EXPECT_EQ(s["simulation"]["agents"].get<int>(), 2000);
    EXPECT_EQ(s["gap"]["samples"].get<int>(), 5000);
    EXPECT_GT(s["gap"]["estimate"].get<double>(), 0.0);

    r = invoke({"report", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* row : {"Total Cost J", "Cost Upper Bound", "Gap Estimate", "max_t P(x_t not in X)"})
        EXPECT_NE(r.out.find(row), std::string::npos) << row;
}

TEST(Cli, SimulateRejectsForeignScenario)
{
    const auto dir = fresh_dir("foreign");
    ASSERT_EQ(invoke({"solve", "--scenario", scenario("minimal"), "--out", dir.string(), "--knots", "11"}).code, 0);
    const auto r = invoke({"simulate", "--scenario", scenario("separation"), "--solution", dir.string()});
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, IdenticalInvocationsGiveIdenticalBundles)
{
    const auto digests = [](const fs::path& dir) {
        const std::string scn = scenario("problem1-like");
        EXPECT_EQ(invoke({"solve", "--scenario", scn, "--out", dir.string(), "--knots", "21"}).code, 0);
        EXPECT_EQ(invoke({"simulate", "--scenario", scn, "--solution", dir.string(), "--agents", "500", "--seed", "9",
                          "--threads", dir.filename() == "mfsb_cli_det_a" ? "1" : "3"})
                      .code,
                  0);
        EXPECT_EQ(invoke({"gap", "--solution", dir.string(), "--samples", "1000", "--seed", "9"}).code, 0);
        return read_text(dir / "manifest.json");
    };
    EXPECT_EQ(digests(fresh_dir("det_a")), digests(fresh_dir("det_b")));
}

TEST(Cli, SeparationStudyWritesCsv)
{
    const auto csv_path = fs::temp_directory_path() / "mfsb_cli_separation.csv";
    const auto r = invoke({"separation-study", "--scenario", scenario("separation"), "--scales", "1,8", "--samples",
                           "20000", "--knots", "31", "--csv", csv_path.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream is(read_text(csv_path));
    std::vector<std::string> header;
    const auto rows = csv::read_numeric(is, "separation.csv", &header);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(header.back(), "gap_ratio");
    EXPECT_GT(rows[0][4], rows[1][4]);
    EXPECT_EQ(invoke({"separation-study", "--scenario", scenario("problem2-like-wide")}).code, 2);
    EXPECT_EQ(invoke({"separation-study", "--scenario", scenario("separation"), "--scales", "1,-2"}).code, 2);
}
