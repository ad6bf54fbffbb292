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
#ifndef MFSB_SCENARIO_IO_HPP
#define MFSB_SCENARIO_IO_HPP

// Scenario documents (JSON) and result bundles (JSON summary, CSV numerics,
// SHA-256 manifest). The format reference is docs/formats.md.

#include "mfsb/csv.hpp"
#include "mfsb/errors.hpp"
#include "mfsb/meanfield.hpp"
#include "mfsb/mixture.hpp"
#include "mfsb/sim.hpp"

#include "json.hpp"
#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mfsb {

using Json = nlohmann::ordered_json;

namespace io_detail {

inline const Json& require(const Json& obj, const std::string& key, const std::string& path)
{
    if (!obj.is_object()) throw SchemaError(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline double number(const Json& v, const std::string& path)
{
    if (!v.is_number()) throw SchemaError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw SchemaError(path, "expected a finite number");
    return x;
}

inline int integer(const Json& v, const std::string& path)
{
    if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
    return v.get<int>();
}

inline Vec vector(const Json& v, const std::string& path, int expected = -1)
{
    if (!v.is_array()) throw SchemaError(path, "expected an array of numbers");
    if (expected >= 0 && static_cast<int>(v.size()) != expected)
        throw SchemaError(path, "expected " + std::to_string(expected) + " entries, got " + std::to_string(v.size()));
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], index(path, i));
    return out;
}

/// Row-major matrix; either one array (constant) or one array per knot.
inline std::vector<Mat> matrices(const Json& v, const std::string& path, int rows, int cols, int knots)
{
    const auto one = [&](const Json& a, const std::string& p) {
        const Vec flat = vector(a, p, rows * cols);
        return Mat(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat.data(), rows, cols));
    };
    if (!v.is_array()) throw SchemaError(path, "expected a row-major array or a list of per-knot arrays");
    if (!v.empty() && v.front().is_array()) {
        if (static_cast<int>(v.size()) != knots)
            throw SchemaError(path, "per-knot form needs " + std::to_string(knots) + " matrices, got " +
                                        std::to_string(v.size()));
        std::vector<Mat> out;
        for (std::size_t k = 0; k < v.size(); ++k) out.push_back(one(v[k], index(path, k)));
        return out;
    }
    return std::vector<Mat>(static_cast<std::size_t>(knots), one(v, path));
}

inline GaussianMixture mixture(const Json& v, const std::string& path, int n)
{
    if (!v.is_array() || v.empty()) throw SchemaError(path, "expected a non-empty list of components");
    std::vector<double> w;
    std::vector<Gaussian> g;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = index(path, i);
        w.push_back(number(require(v[i], "weight", p), join(p, "weight")));
        const Vec mean = vector(require(v[i], "mean", p), join(p, "mean"), n);
        const Vec tri = vector(require(v[i], "cov_lower_triangle", p), join(p, "cov_lower_triangle"), n * (n + 1) / 2);
        const Mat cov = from_lower_triangle(tri, n);
        if (min_eigenvalue(cov) <= 0.0)
            throw DomainError("covariance of component " + p + " is not positive definite");
        g.emplace_back(mean, cov);
    }
    try {
        w = normalized_weights(w, (path + " weights").c_str());
    } catch (const InputError& e) {
        throw SchemaError(path, e.what());
    }
    return {std::move(w), std::move(g)};
}

inline Json array(const Vec& v)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Json row_major(const Mat& M)
{
    Json a = Json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c) a.push_back(M(r, c));
    return a;
}

inline Json matrices_json(int T, const std::function<const Mat&(int)>& at)
{
    bool constant = true;
    for (int k = 1; k < T; ++k) constant = constant && at(k) == at(0);
    if (constant) return row_major(at(0));
    Json a = Json::array();
    for (int k = 0; k < T; ++k) a.push_back(row_major(at(k)));
    return a;
}

inline Json mixture_json(const GaussianMixture& g)
{
    Json a = Json::array();
    for (int i = 0; i < g.size(); ++i)
        a.push_back(Json{{"weight", g.weight(i)},
                         {"mean", array(g.component(i).mean())},
                         {"cov_lower_triangle", array(lower_triangle(g.component(i).cov()))}});
    return a;
}

}  // namespace io_detail

/// Builds a Scenario from a parsed document. Errors name the JSON path.
inline Scenario scenario_from_json(const Json& doc)
{
    using namespace io_detail;
    if (!doc.is_object()) throw SchemaError("", "scenario document must be a JSON object");
    const Json& grid = require(doc, "grid", "");
    const int knots = integer(require(grid, "knots", "grid"), "grid.knots");
    if (knots < 2) throw SchemaError("grid.knots", "needs at least 2 knots");

    const Json& sys = require(doc, "system", "");
    const int n = integer(require(sys, "n", "system"), "system.n");
    const int m = integer(require(sys, "m", "system"), "system.m");
    const int q = sys.contains("q") ? integer(sys["q"], "system.q") : n;
    if (n < 1 || m < 1 || q < 1) throw SchemaError("system", "dimensions must be positive");
    auto A = matrices(require(sys, "A", "system"), "system.A", n, n, knots);
    auto Abar = sys.contains("Abar") ? matrices(sys["Abar"], "system.Abar", n, n, knots)
                                     : std::vector<Mat>(static_cast<std::size_t>(knots), Mat::Zero(n, n));
    auto B = matrices(require(sys, "B", "system"), "system.B", n, m, knots);
    auto D = matrices(require(sys, "D", "system"), "system.D", n, q, knots);

    Scenario scn{LTVSystem(std::move(A), std::move(Abar), std::move(B), std::move(D)), TimeGrid(knots),
                 mixture(require(doc, "rho0", ""), "rho0", n), mixture(require(doc, "rho1", ""), "rho1", n), {}, {},
                 {}};

    if (doc.contains("obstacles")) {
        const Json& obs = doc["obstacles"];
        if (!obs.is_array()) throw SchemaError("obstacles", "expected a list");
        for (std::size_t o = 0; o < obs.size(); ++o) {
            const std::string p = index("obstacles", o);
            const Json& faces = require(obs[o], "faces", p);
            if (!faces.is_array() || faces.empty()) throw SchemaError(join(p, "faces"), "expected a non-empty list");
            Obstacle ob;
            for (std::size_t f = 0; f < faces.size(); ++f) {
                const std::string fp = index(join(p, "faces"), f);
                const Vec a = vector(require(faces[f], "a", fp), join(fp, "a"), n);
                const double beta = number(require(faces[f], "beta", fp), join(fp, "beta"));
                if (a.norm() == 0.0) throw SchemaError(join(fp, "a"), "face normal must be nonzero");
                ob.faces.emplace_back(a, beta);
            }
            scn.obstacles.push_back(std::move(ob));
        }
    }
    if (doc.contains("routes")) {
        const Json& routes = doc["routes"];
        if (!routes.is_array() || routes.empty()) throw SchemaError("routes", "expected a non-empty list");
        for (std::size_t r = 0; r < routes.size(); ++r) {
            const std::string p = index("routes", r);
            const Json& name = require(routes[r], "name", p);
            if (!name.is_string()) throw SchemaError(join(p, "name"), "expected a string");
            const Json& fc = require(routes[r], "face_choice", p);
            if (!fc.is_array() || fc.size() != scn.obstacles.size())
                throw SchemaError(join(p, "face_choice"), "expected one face index per obstacle");
            Route route{name.get<std::string>(), {}};
            for (std::size_t o = 0; o < fc.size(); ++o) {
                const int f = integer(fc[o], index(join(p, "face_choice"), o));
                if (f < 0 || f >= static_cast<int>(scn.obstacles[o].faces.size()))
                    throw SchemaError(index(join(p, "face_choice"), o), "face index out of range");
                route.face_choice.push_back(f);
            }
            scn.routes.push_back(std::move(route));
        }
    } else if (!scn.obstacles.empty()) {
        throw SchemaError("routes", "scenarios with obstacles must declare routes");
    }
    if (scn.routes.empty()) scn.routes.push_back(Route{"direct", {}});

    if (doc.contains("chance")) {
        const Json& ch = doc["chance"];
        if (!ch.is_object()) throw SchemaError("chance", "expected an object");
        const bool total = ch.contains("total_budget"), per = ch.contains("per_face_budget");
        if (total == per) throw SchemaError("chance", "give exactly one of total_budget and per_face_budget");
        if (total) {
            scn.chance.total_budget = number(ch["total_budget"], "chance.total_budget");
            if (!(scn.chance.total_budget > 0.0 && scn.chance.total_budget < 1.0))
                throw SchemaError("chance.total_budget", "must lie in (0, 1)");
        } else {
            const double d = number(ch["per_face_budget"], "chance.per_face_budget");
            if (!(d > 0.0 && d < 0.5)) throw SchemaError("chance.per_face_budget", "must lie in (0, 1/2)");
            scn.chance.per_face_budget = d;
        }
        if (ch.contains("knot_window")) {
            const Vec w = vector(ch["knot_window"], "chance.knot_window", 2);
            if (!(0.0 <= w(0) && w(0) <= w(1) && w(1) <= 1.0))
                throw SchemaError("chance.knot_window", "expected 0 <= begin <= end <= 1");
            scn.chance.window = KnotWindow{w(0), w(1)};
        }
    } else if (!scn.obstacles.empty()) {
        throw SchemaError("chance", "scenarios with obstacles need a violation budget");
    }
    try {
        scn.validate();
    } catch (const ConfigurationError& e) {
        throw SchemaError("", e.what());
    }
    return scn;
}

inline Json scenario_to_json(const Scenario& scn)
{
    using namespace io_detail;
    const int T = scn.sys.knots();
    Json sys{{"n", scn.sys.n()}, {"m", scn.sys.m()}, {"q", scn.sys.q()}};
    sys["A"] = matrices_json(T, [&](int k) -> const Mat& { return scn.sys.A(k); });
    sys["Abar"] = matrices_json(T, [&](int k) -> const Mat& { return scn.sys.Abar(k); });
    sys["B"] = matrices_json(T, [&](int k) -> const Mat& { return scn.sys.B(k); });
    sys["D"] = matrices_json(T, [&](int k) -> const Mat& { return scn.sys.D(k); });
    Json doc{{"grid", {{"knots", scn.grid.size()}}}, {"system", sys}, {"rho0", mixture_json(scn.rho0)},
             {"rho1", mixture_json(scn.rho1)}};
    if (!scn.obstacles.empty()) {
        Json obs = Json::array();
        for (const auto& o : scn.obstacles) {
            Json faces = Json::array();
            for (const auto& f : o.faces) faces.push_back(Json{{"a", array(f.a)}, {"beta", f.beta}});
            obs.push_back(Json{{"faces", faces}});
        }
        doc["obstacles"] = obs;
        Json ch;
        if (scn.chance.per_face_budget)
            ch["per_face_budget"] = *scn.chance.per_face_budget;
        else
            ch["total_budget"] = scn.chance.total_budget;
        ch["knot_window"] = Json::array({scn.chance.window.begin, scn.chance.window.end});
        doc["chance"] = ch;
    }
    Json routes = Json::array();
    for (const auto& r : scn.routes) routes.push_back(Json{{"name", r.name}, {"face_choice", r.face_choice}});
    doc["routes"] = routes;
    return doc;
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

inline Scenario parse_scenario_text(const std::string& text, const std::string& where = "scenario")
{
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw SchemaError("", where + " is not valid JSON: " + e.what());
    }
    return scenario_from_json(doc);
}

inline Scenario parse_scenario(const std::filesystem::path& path)
{
    return parse_scenario_text(read_text(path), path.string());
}

inline void write_scenario(const std::filesystem::path& path, const Scenario& scn)
{
    write_text(path, scenario_to_json(scn).dump(2) + "\n");
}

/// Same scenario on a different knot count (time-invariant systems only).
inline Scenario with_knots(Scenario scn, int knots)
{
    scn.sys = scn.sys.resampled(knots);
    scn.grid = TimeGrid(knots);
    return scn;
}

/// Lower-case hex SHA-256 of a byte string.
inline std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("SHA-256 digest failed");
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

struct ManifestEntry {
    std::string path;
    std::uintmax_t bytes = 0;
    std::string sha256;
};

/// Digests every regular file under dir except the manifest itself, sorted by path.
inline std::vector<ManifestEntry> write_manifest(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    std::vector<ManifestEntry> entries;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (rel == "manifest.json") continue;
        const std::string text = read_text(e.path());
        entries.push_back({rel, text.size(), sha256_hex(text)});
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    Json files = Json::array();
    for (const auto& e : entries) files.push_back(Json{{"path", e.path}, {"bytes", e.bytes}, {"sha256", e.sha256}});
    write_text(dir / "manifest.json", Json{{"files", files}}.dump(2) + "\n");
    return entries;
}

inline std::string policy_file(int i, int j, int r)
{
    return "policies/policy_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(r) + ".csv";
}

inline std::string flow_file(int k)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "flow/knot_%04d.csv", k);
    return buf;
}

/// Everything a solve produces.
struct ResultBundle {
    Scenario scenario;
    MfsbResult result;
};

/// Writes a solve into out_dir and returns the manifest. Simulation and gap
/// results are added later with update_summary.
inline std::vector<ManifestEntry> write_results(const ResultBundle& bundle, const std::filesystem::path& out_dir)
{
    namespace fs = std::filesystem;
    const Scenario& scn = bundle.scenario;
    const MixtureSolution& sol = bundle.result.solution;
    std::error_code ec;
    fs::create_directories(out_dir / "policies", ec);
    fs::create_directories(out_dir / "flow", ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    // stale per-block and per-knot files from an earlier run would corrupt the manifest
    for (const char* sub : {"policies", "flow"})
        for (const auto& e : fs::directory_iterator(out_dir / sub)) fs::remove(e.path());

    write_scenario(out_dir / "scenario.json", scn);
    {
        std::ostringstream os;
        write_plan_csv(os, sol.plan, sol.costs);
        write_text(out_dir / "plan.csv", os.str());
    }
    const int N1 = sol.plan.cols(), R = sol.plan.routes();
    for (std::size_t p = 0; p < sol.policies.size(); ++p) {
        if (!sol.policies[p]) continue;
        const int i = static_cast<int>(p) / (N1 * R), j = (static_cast<int>(p) / R) % N1, r = static_cast<int>(p) % R;
        std::ostringstream os;
        write_policy_csv(os, *sol.policies[p], sol.grid);
        write_text(out_dir / policy_file(i, j, r), os.str());
    }
    for (int k = 0; k < sol.grid.size(); ++k) {
        std::ostringstream os;
        write_flow_csv(os, sol, k);
        write_text(out_dir / flow_file(k), os.str());
    }
    {
        std::ostringstream os;
        const int n = scn.sys.n(), m = scn.sys.m();
        std::vector<std::string> head{"t"};
        for (int d = 0; d < n; ++d) head.push_back("xbar_" + std::to_string(d));
        if (!sol.ubar.empty())
            for (int d = 0; d < m; ++d) head.push_back("ubar_" + std::to_string(d));
        csv::write_row(os, head);
        for (int k = 0; k < sol.grid.size(); ++k) {
            std::vector<std::string> row{csv::num(sol.grid[k])};
            csv::append(row, sol.xbar[k]);
            if (!sol.ubar.empty()) csv::append(row, sol.ubar[k]);
            csv::write_row(os, row);
        }
        write_text(out_dir / "meanfield.csv", os.str());
    }
    {
        std::ostringstream os;
        csv::write_row(os, {"iteration", "J_OT"});
        for (std::size_t it = 0; it < bundle.result.iterations.size(); ++it)
            csv::write_row(os, {std::to_string(it + 1), csv::num(bundle.result.iterations[it])});
        write_text(out_dir / "iterations.csv", os.str());
    }

    Json routes = Json::array();
    for (const auto& r : scn.routes) routes.push_back(r.name);
    Json summary{{"status", bundle.result.status},
                 {"knots", sol.grid.size()},
                 {"components", {{"initial", sol.plan.rows()}, {"terminal", sol.plan.cols()}}},
                 {"routes", routes},
                 {"cost_upper_bound", sol.bound()},
                 {"iterations", bundle.result.iterations}};
    if (!scn.constrained()) {
        summary["mean_cost"] = bundle.result.mean_cost;
        summary["decomposition_residuals"] = {{"mean", bundle.result.residual_mean},
                                             {"feedforward", bundle.result.residual_feedforward}};
    }
    double predicted = 0.0;
    if (scn.constrained())
        for (int k = 0; k < sol.grid.size(); ++k) predicted = std::max(predicted, predicted_violation(scn, sol, k));
    summary["predicted_max_violation"] = predicted;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return write_manifest(out_dir);
}

inline Json read_summary(const std::filesystem::path& dir)
{
    try {
        return Json::parse(read_text(dir / "summary.json"));
    } catch (const Json::parse_error& e) {
        throw IoError((dir / "summary.json").string() + " is not valid JSON: " + e.what());
    }
}

/// Merges the patch object into summary.json and refreshes the manifest.
inline std::vector<ManifestEntry> update_summary(const std::filesystem::path& dir, const Json& patch)
{
    Json summary = read_summary(dir);
    for (const auto& [key, value] : patch.items()) summary[key] = value;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return write_manifest(dir);
}

struct LoadedSolution {
    Scenario scenario;
    MixtureSolution solution;
};

/// Reads the scenario, plan, policies and mean-field trajectory back from a bundle.
inline LoadedSolution load_solution(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    LoadedSolution out{parse_scenario(dir / "scenario.json"), {}};
    const Scenario& scn = out.scenario;
    MixtureSolution& sol = out.solution;
    sol.grid = scn.grid;
    {
        std::istringstream is(read_text(dir / "plan.csv"));
        auto [plan, J] = read_plan_csv(is, (dir / "plan.csv").string());
        sol.plan = std::move(plan);
        sol.costs = std::move(J);
    }
    if (sol.plan.rows() != scn.rho0.size() || sol.plan.cols() != scn.rho1.size() ||
        sol.plan.routes() != scn.num_routes())
        throw IoError("plan.csv does not match the bundled scenario");
    const int N0 = sol.plan.rows(), N1 = sol.plan.cols(), R = sol.plan.routes();
    sol.policies.resize(static_cast<std::size_t>(N0 * N1 * R));
    for (int i = 0; i < N0; ++i)
        for (int j = 0; j < N1; ++j)
            for (int r = 0; r < R; ++r) {
                const fs::path p = dir / policy_file(i, j, r);
                if (!fs::exists(p)) continue;
                std::istringstream is(read_text(p));
                ConditionalPolicy pol = read_policy_csv(is, scn.sys.n(), scn.sys.m(), p.string());
                pol.cost = sol.costs(i, j, r);
                sol.policies[sol.plan.lambda.index(i, j, r)] = std::move(pol);
            }
    std::istringstream is(read_text(dir / "meanfield.csv"));
    std::vector<std::string> header;
    const auto rows = csv::read_numeric(is, (dir / "meanfield.csv").string(), &header);
    if (static_cast<int>(rows.size()) != scn.grid.size()) throw IoError("meanfield.csv has the wrong number of knots");
    const int n = scn.sys.n(), m = scn.sys.m();
    const bool has_ubar = static_cast<int>(header.size()) == 1 + n + m;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != static_cast<int>(header.size())) throw IoError("ragged meanfield.csv");
        sol.xbar.push_back(Eigen::Map<const Vec>(row.data() + 1, n));
        if (has_ubar) sol.ubar.push_back(Eigen::Map<const Vec>(row.data() + 1 + n, m));
    }
    return out;
}

}  // namespace mfsb

#endif  // MFSB_SCENARIO_IO_HPP
