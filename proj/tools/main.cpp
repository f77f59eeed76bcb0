#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fewstep/adjoint.hpp"
#include "fewstep/checkpoint.hpp"
#include "fewstep/config.hpp"
#include "fewstep/errors.hpp"
#include "fewstep/parallel.hpp"
#include "fewstep/results.hpp"
#include "fewstep/solver.hpp"
#include "fewstep/sweep.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using namespace fewstep;

namespace {

constexpr int kExitError = 1;
constexpr int kExitDiverged = 3;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode;
    std::string checkpoint;
    bool force = false;
};

ExperimentConfig load(const Options& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.out.empty()) c.out_dir = o.out;
    if (!o.mode.empty()) c.mode = train_mode_from_string(o.mode);
    c.train.seed = c.seed;
    c.train.workers = 0;
    return c;
}

fs::path out_path(const ExperimentConfig& c, const std::string& name) {
    const fs::path p(name);
    return p.is_absolute() ? p : fs::path(c.out_dir) / p;
}

fs::path checkpoint_path(const Options& o, const ExperimentConfig& c) {
    return o.checkpoint.empty() ? out_path(c, "checkpoint.bin") : fs::path(o.checkpoint);
}

std::uint64_t fnv1a(const Vector& v) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t n = 0; n < static_cast<std::size_t>(v.size()) * sizeof(double); ++n) {
        h = (h ^ bytes[n]) * 1099511628211ULL;
    }
    return h;
}

int generate_teacher(const Options& o) {
    const ExperimentConfig c = load(o);
    const Problem pb = Problem::from_config(c);
    const Dataset ds = make_dataset(c, pb, 0);
    const fs::path path = out_path(c, c.dataset.path);
    fs::create_directories(path.parent_path());
    write_dataset(path.string(), ds);
    std::printf("dataset %s\n  records %zu (train %zu, validation %zu)\n  dim %d\n  teacher %s\n  checksum %016llx\n",
                path.c_str(), ds.records.size(), ds.train_count, ds.records.size() - ds.train_count, ds.dim,
                std::string(to_string(c.teacher.kind)).c_str(),
                static_cast<unsigned long long>(dataset_checksum(ds)));
    return 0;
}

int train(const Options& o) {
    const ExperimentConfig c = load(o);
    const Problem pb = Problem::from_config(c);
    const fs::path data = out_path(c, c.dataset.path);
    if (!fs::exists(data)) {
        throw IoError("dataset " + data.string() + " not found; run generate-teacher with the same --config/--out");
    }
    Dataset ds = read_dataset(data.string());
    if (ds.dim != pb.model.dim()) throw CompatibilityError("dataset dimension differs from the configured problem");
    const auto setup = make_student(pb, c.solver, c.grid.kind, c.grid, c.solver.nfe, c.seed);
    if (!setup) throw ArgumentError("solver order exceeds the step count at nfe " + std::to_string(c.solver.nfe));

    const TrainResult r = run_training(c.mode, ds, *setup, pb, c.train);

    Checkpoint ck;
    ck.config_hash = config_hash(c);
    ck.config_json = config_to_json(c).dump();
    ck.mode = std::string(to_string(c.mode));
    ck.dim = ds.dim;
    ck.coeffs = r.coeffs;
    ck.params = c.mode == TrainMode::S4S ? setup->params : r.params;
    ck.grid = c.mode == TrainMode::S4S ? setup->grid : r.grid(pb.schedule);
    ck.radius = r.radius;
    ck.updates = r.updates;
    ck.diverged = r.diverged;
    for (const TrainRecord& rec : ds.train()) ck.x_prime.emplace_back(rec.id, rec.x_T_prime);
    const fs::path ckp = checkpoint_path(o, c);
    fs::create_directories(ckp.parent_path());
    write_checkpoint(ckp.string(), ck);
    const fs::path hist = out_path(c, "history.csv");
    write_history_csv(hist.string(), r.history);

    std::printf("mode %s, %ld updates, radius %.4g\n", ck.mode.c_str(), r.updates, r.radius);
    std::printf("  selected update %ld: train loss %.6g, val loss %.6g, val error %.6g\n", r.selected_update,
                r.train_loss, r.val_loss, r.val_error);
    std::printf("  projection checks %ld, violations %ld\n", r.projection_checks, r.projection_violations);
    std::printf("  coefficients checksum %016llx\n", static_cast<unsigned long long>(fnv1a(r.coeffs.values())));
    std::printf("  checkpoint %s\n  history %s\n", ckp.c_str(), hist.c_str());
    if (r.diverged) {
        std::fprintf(stderr, "training diverged: %s (partial checkpoint written)\n", r.message.c_str());
        return kExitDiverged;
    }
    return 0;
}

int evaluate_cmd(const Options& o) {
    const ExperimentConfig c = load(o);
    const Checkpoint ck = read_checkpoint(checkpoint_path(o, c).string());
    check_compatibility(ck, c, o.force);
    const Problem pb = Problem::from_config(c);
    const auto samples = make_eval_samples(c, pb, 0);

    ResultRow row;
    row.schedule = std::string(to_string(c.grid.kind));
    row.solver = solver_label(c.solver);
    row.mode = ck.mode;
    row.nfe = expected_nfe(ck.coeffs.kind(), ck.coeffs.order(), ck.coeffs.steps());
    const EvalMetrics m = evaluate(ck.coeffs, ck.grid, pb.schedule, pb.model, samples, 0);
    row.status = ck.diverged ? "failed" : "ok";
    row.mean_error = m.mean_error;
    row.median_error = m.median_error;
    row.max_error = m.max_error;
    row.mean_rel_error = m.mean_rel_error;
    row.nfe_used = m.nfe;
    if (const auto base = make_student(pb, c.solver, c.grid.kind, c.grid, row.nfe, c.seed)) {
        row.baseline_mean_error = evaluate(base->coeffs, base->grid, pb.schedule, pb.model, samples, 0).mean_error;
        row.delta_mean_error = row.mean_error - row.baseline_mean_error;
    }
    ResultTable t;
    t.rows.push_back(row);
    const fs::path csv = out_path(c, "evaluate.csv");
    fs::create_directories(csv.parent_path());
    t.write_csv(csv.string());
    std::cout << t.to_text() << "written " << csv.string() << "\n";
    return 0;
}

int sweep(const Options& o) {
    const ExperimentConfig c = load(o);
    const ResultTable t = run_sweep(c, c.out_dir, 0);
    std::cout << t.to_text();
    std::size_t failed = 0;
    for (const ResultRow& r : t.rows) failed += r.status == "failed";
    std::cout << t.rows.size() << " cells, " << failed << " failed; written "
              << (fs::path(c.out_dir) / "sweep.csv").string() << "\n";
    return 0;
}

int check_grad(const Options& o) {
    const ExperimentConfig c = load(o);
    GradientCheckSpec spec;
    spec.kind = c.solver.kind;
    spec.order = c.solver.order;
    spec.prediction = c.solver.prediction;
    spec.domain = c.solver.domain;
    spec.schedule = c.problem.schedule.kind;
    spec.seed = c.seed;
    const GradientCheckReport r = check_gradients(spec, 1e-4);
    std::printf("%d instances (%s k=%d N=%d d=%d), tolerance %.0e\n", r.instances,
                std::string(to_string(spec.kind)).c_str(), spec.order, spec.steps, spec.dim, r.tolerance);
    std::printf("  max relative deviation: coefficients %.3e, time %.3e, x_T %.3e\n", r.max_rel_coeffs,
                r.max_rel_time, r.max_rel_x);
    for (const std::string& f : r.failures) std::printf("  %s\n", f.c_str());
    std::printf("%s\n", r.passed ? "PASS" : "FAIL");
    return r.passed ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned few-step solvers for diffusion probability-flow ODEs"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override the config seed");
        sub->add_option("--out", o.out, "Output directory (overrides out_dir)");
    };

    auto* gen = app.add_subcommand("generate-teacher", "Solve the teacher ODE and write the dataset");
    common(gen);
    auto* tr = app.add_subcommand("train", "Train a student solver on the dataset");
    common(tr);
    tr->add_option("--mode", o.mode, "s4s, s4s-alt or joint")->check(CLI::IsMember({"s4s", "s4s-alt", "joint"}));
    tr->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on fresh noise");
    common(ev);
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
    ev->add_flag("--force", o.force, "Evaluate despite a config hash mismatch");
    auto* sw = app.add_subcommand("sweep", "Run the grid x solver x mode x NFE sweep (resumable)");
    common(sw);
    auto* cg = app.add_subcommand("check-grad", "Adjoint gradients against finite differences");
    common(cg);
    auto* st = app.add_subcommand("selftest", "Runtime invariant suite");
    st->add_option("--seed", o.seed, "Seed for the random instances");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return generate_teacher(o);
        if (*tr) return train(o);
        if (*ev) return evaluate_cmd(o);
        if (*sw) return sweep(o);
        if (*cg) return check_grad(o);
        if (*st) return run_selftest(o.seed.value_or(0), worker_count());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitError;
}
