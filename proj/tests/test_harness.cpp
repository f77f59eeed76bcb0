#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fewstep/checkpoint.hpp"
#include "fewstep/config.hpp"
#include "fewstep/errors.hpp"
#include "fewstep/results.hpp"
#include "fewstep/sweep.hpp"

using namespace fewstep;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fewstep_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.seed = 4;
    c.teacher.kind = TeacherKind::FineFixedStep;
    c.teacher.fine_nfe = 100;
    c.dataset.count = 30;
    c.evaluation.samples = 20;
    c.train.epochs = 1;
    c.train.batch_size = 10;
    c.solver.order = 2;
    c.sweep.solvers = {c.solver};
    c.nfe = {1, 3};
    return c;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config round-trips through JSON") {
    ExperimentConfig c = small_config();
    c.problem.schedule.kind = ScheduleKind::Edm;
    c.problem.schedule.t_min = 0.002;
    c.problem.components = {{0.25, Vector::Ones(3), 0.5}, {0.75, -Vector::Ones(3), 1.5}};
    c.solver.kind = SolverKind::Pc;
    c.solver.preset = Preset::UniPc;
    c.mode = TrainMode::S4SAlt;
    c.train.radius = 0.05;
    c.train.lr_schedule = LrSchedule::Constant;
    c.sweep.grids = {GridKind::LogSnr, GridKind::Edm};
    c.sweep.modes = {TrainMode::S4S, TrainMode::Joint};
    c.train.seed = c.seed;  // the top-level seed drives training
    const ExperimentConfig back = config_from_json(config_to_json(c));
    CHECK(back == c);
    const fs::path dir = scratch("config");
    save_config((dir / "c.json").string(), c);
    CHECK(load_config((dir / "c.json").string()) == c);
}

TEST_CASE("config parsing is strict and names the offending key") {
    nlohmann::json j = config_to_json(small_config());
    j["train"]["learning_rate"] = 0.1;
    try {
        config_from_json(j);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("train.learning_rate") != std::string::npos);
    }
    j = config_to_json(small_config());
    j["solver"]["order"] = "three";
    CHECK_THROWS_AS(config_from_json(j), ParseError);
    j = config_to_json(small_config());
    j["grid"]["clip_fraction"] = 1.5;
    CHECK_THROWS_AS(config_from_json(j), ParseError);
    j = config_to_json(small_config());
    j["version"] = 99;
    CHECK_THROWS_AS(config_from_json(j), ParseError);
    j = config_to_json(small_config());
    j["solver"]["preset"] = "heun";
    CHECK_THROWS_AS(config_from_json(j), ParseError);
    // Missing sections fall back to defaults; the version is mandatory.
    CHECK_THROWS_AS(config_from_json(nlohmann::json::object()), ParseError);
    const ExperimentConfig d = config_from_json(nlohmann::json{{"version", kConfigVersion}});
    CHECK(d == ExperimentConfig{});
    CHECK_THROWS_AS(load_config("/nonexistent/fewstep.json"), IoError);
}

TEST_CASE("config hash covers problem, solver and grid only") {
    const ExperimentConfig a = small_config();
    ExperimentConfig b = a;
    b.train.epochs = 50;
    b.out_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.solver.order = 3;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.grid.kind = GridKind::Uniform;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("NFE budgets map to step counts") {
    CHECK(steps_for_nfe(SolverKind::Lms, 3, 6) == 6);
    CHECK(steps_for_nfe(SolverKind::Lms, 3, 2) == std::nullopt);
    CHECK(steps_for_nfe(SolverKind::Pc, 2, 6) == 5);
    CHECK(steps_for_nfe(SolverKind::Pc, 2, 2) == std::nullopt);
    CHECK(steps_for_nfe(SolverKind::Ss, 2, 6) == 3);
    CHECK(steps_for_nfe(SolverKind::Ss, 2, 5) == std::nullopt);
    CHECK(steps_for_nfe(SolverKind::Ss, 3, 3) == 1);
    for (SolverKind kind : {SolverKind::Lms, SolverKind::Pc, SolverKind::Ss}) {
        for (int k = 1; k <= 3; ++k) {
            for (int nfe = 1; nfe <= 12; ++nfe) {
                if (const auto N = steps_for_nfe(kind, k, nfe)) CHECK(expected_nfe(kind, k, *N) == nfe);
            }
        }
    }
}

TEST_CASE("dataset and evaluation streams are distinct") {
    const ExperimentConfig c = small_config();
    CHECK(dataset_seed(c.seed) != eval_seed(c.seed));
    const Problem p = Problem::from_config(c);
    const Dataset d = make_dataset(c, p, 1);
    const auto e = make_eval_samples(c, p, 1);
    CHECK(d.records.size() == 30);
    CHECK(e.size() == 20);
    for (const auto& s : e) {
        for (const auto& r : d.records) CHECK(s.x_T != r.x_T);
    }
}

TEST_CASE("result tables round-trip with empty fields for missing numbers") {
    ResultTable t;
    ResultRow ok;
    ok.schedule = "logsnr";
    ok.solver = "lms3-ipndm-noise";
    ok.mode = "s4s";
    ok.nfe = 6;
    ok.status = "ok";
    ok.mean_error = 0.125;
    ok.median_error = 0.1;
    ok.max_error = 0.5;
    ok.mean_rel_error = 0.01;
    ok.nfe_used = 6;
    ok.wall_ms = 12.5;
    ok.baseline_mean_error = 0.25;
    ok.delta_mean_error = -0.125;
    ok.message = "note, with \"quotes\"";
    ResultRow bad;
    bad.schedule = "logsnr";
    bad.solver = "lms3-ipndm-noise";
    bad.mode = "s4s";
    bad.nfe = 2;
    bad.status = "infeasible";
    t.rows = {ok, bad};
    const std::string csv = t.to_csv();
    CHECK(csv.rfind("schedule,solver,mode,nfe,status,mean_error", 0) == 0);
    const ResultTable back = ResultTable::parse_csv(csv);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0].mean_error == 0.125);
    CHECK(back.rows[0].message == ok.message);
    CHECK(std::isnan(back.rows[1].mean_error));
    CHECK(back.to_csv() == csv);
    CHECK(back.to_text().find("infeasible") != std::string::npos);
    CHECK(result_columns().size() == 14);
    CHECK_THROWS_AS(ResultTable::parse_csv("a,b\n"), ParseError);
    CHECK_THROWS_AS(ResultTable::parse_csv(""), ParseError);
}

TEST_CASE("history CSV columns") {
    const fs::path dir = scratch("history");
    write_history_csv((dir / "h.csv").string(), {{0, 1.0, 2.0, 3.0, 0.1, "init"}, {4, 0.5, 1.5, 2.5, 0.1, "coeffs"}});
    const std::string text = read_file(dir / "h.csv");
    CHECK(text.rfind("iteration,train_loss,val_loss,val_error,r,phase\n", 0) == 0);
    CHECK(text.find("4,0.5,1.5,2.5,0.10000000000000001,coeffs") != std::string::npos);
}

TEST_CASE("checkpoints round-trip and guard compatibility") {
    const ExperimentConfig c = small_config();
    const Problem p = Problem::from_config(c);
    const auto setup = make_student(p, c.solver, c.grid.kind, c.grid, c.solver.nfe, 0);
    REQUIRE(setup);
    Checkpoint ck;
    ck.config_hash = config_hash(c);
    ck.config_json = config_to_json(c).dump();
    ck.mode = "s4s";
    ck.dim = 2;
    ck.coeffs = setup->coeffs;
    ck.coeffs.values()[0] = 0.75;
    ck.grid = setup->grid;
    ck.params = setup->params;
    ck.radius = 0.01;
    ck.updates = 12;
    ck.x_prime = {{7, Vector::Ones(2)}, {9, -Vector::Ones(2)}};
    const fs::path dir = scratch("checkpoint");
    const std::string path = (dir / "ck.bin").string();
    write_checkpoint(path, ck);
    const Checkpoint back = read_checkpoint(path);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.config_json == ck.config_json);
    CHECK(back.coeffs.values() == ck.coeffs.values());
    CHECK(back.coeffs.same_layout(ck.coeffs));
    CHECK(back.grid.steps == ck.grid.steps);
    CHECK(back.params.xi == ck.params.xi);
    CHECK(back.x_prime.size() == 2);
    CHECK(back.x_prime[1].second == ck.x_prime[1].second);
    CHECK(back.updates == 12);

    CHECK_NOTHROW(check_compatibility(back, c, false));
    ExperimentConfig other = c;
    other.grid.kind = GridKind::Uniform;
    CHECK_THROWS_AS(check_compatibility(back, other, false), CompatibilityError);
    CHECK_NOTHROW(check_compatibility(back, other, true));
    other = c;
    other.solver.nfe = 8;
    CHECK_THROWS_AS(check_compatibility(back, other, true), CompatibilityError);
    other = c;
    other.problem.components = {{1.0, Vector::Zero(3), 1.0}};
    CHECK_THROWS_AS(check_compatibility(back, other, true), CompatibilityError);

    fs::resize_file(path, fs::file_size(path) - 3);
    CHECK_THROWS_AS(read_checkpoint(path), IoError);
}

TEST_CASE("sweep marks infeasible cells and resumes from finished ones") {
    ExperimentConfig c = small_config();
    const fs::path dir = scratch("sweep");
    const ResultTable first = run_sweep(c, dir.string(), 1);
    REQUIRE(first.rows.size() == 2);
    CHECK(first.rows[0].nfe == 1);
    CHECK(first.rows[0].status == "infeasible");
    CHECK(first.rows[1].status == "ok");
    CHECK(first.rows[1].nfe_used == 3);
    CHECK(std::isfinite(first.rows[1].mean_error));
    CHECK(first.rows[1].delta_mean_error ==
          doctest::Approx(first.rows[1].mean_error - first.rows[1].baseline_mean_error));
    CHECK(fs::exists(dir / "sweep.csv"));

    // A finished cell is reused verbatim; a missing one is recomputed.
    const auto cells = sweep_cells(c);
    const fs::path kept = dir / "cells" / (cells[1].key() + ".csv");
    ResultTable edited = ResultTable::read_csv(kept.string());
    edited.rows[0].message = "kept";
    edited.write_csv(kept.string());
    fs::remove(dir / "cells" / (cells[0].key() + ".csv"));
    const ResultTable second = run_sweep(c, dir.string(), 1);
    CHECK(second.rows[1].message == "kept");
    CHECK(second.rows[0].status == "infeasible");
    CHECK(fs::exists(dir / "cells" / (cells[0].key() + ".csv")));
}

TEST_CASE("sweep cells enumerate the full product") {
    ExperimentConfig c = small_config();
    c.sweep.grids = {GridKind::LogSnr, GridKind::Uniform};
    c.sweep.modes = {TrainMode::S4S, TrainMode::S4SAlt, TrainMode::Joint};
    SolverSpec ss;
    ss.kind = SolverKind::Ss;
    ss.order = 2;
    ss.preset = Preset::DpmSolverSingle;
    c.sweep.solvers = {c.solver, ss};
    c.nfe = {4, 6, 8};
    const auto cells = sweep_cells(c);
    CHECK(cells.size() == 2 * 2 * 3 * 3);
    std::set<std::string> keys;
    for (const auto& cell : cells) keys.insert(cell.key());
    CHECK(keys.size() == cells.size());
}

}  // TEST_SUITE
