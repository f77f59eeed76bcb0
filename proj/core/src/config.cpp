#include "fewstep/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "fewstep/errors.hpp"

namespace fewstep {

using nlohmann::json;

NoiseSchedule ScheduleSpec::build() const {
    const double tm = t_min.value_or(-1.0);
    NoiseSchedule s = [&] {
        switch (kind) {
            case ScheduleKind::VpLinear: return NoiseSchedule::vp_linear(beta_min, beta_max, T.value_or(1.0), tm);
            case ScheduleKind::Ve: return NoiseSchedule::ve(sigma_min, sigma_max, T.value_or(1.0), tm);
            case ScheduleKind::Edm: return NoiseSchedule::edm(T.value_or(80.0), tm);
        }
        throw ArgumentError("unknown schedule kind");
    }();
    if (tilde_sigma) s = s.with_tilde_sigma(*tilde_sigma);
    return s;
}

GaussianMixtureScore ProblemSpec::build_model() const {
    if (components.empty()) return GaussianMixtureScore::default_toy();
    return GaussianMixtureScore(components);
}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ParseError((path_.empty() ? std::string("config") : path_) + ": expected an object");
    }

    const json* get(const std::string& key) {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string path(const std::string& key) const { return join(path_, key); }

    double number(const std::string& key, double def) {
        const json* v = get(key);
        if (v == nullptr) return def;
        if (!v->is_number()) throw ParseError(path(key) + ": expected a number");
        return v->get<double>();
    }

    std::optional<double> opt_number(const std::string& key) {
        const json* v = get(key);
        if (v == nullptr) return std::nullopt;
        if (!v->is_number()) throw ParseError(path(key) + ": expected a number");
        return v->get<double>();
    }

    long long integer(const std::string& key, long long def) {
        const json* v = get(key);
        if (v == nullptr) return def;
        if (!v->is_number_integer()) throw ParseError(path(key) + ": expected an integer");
        return v->get<long long>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
        const json* v = get(key);
        if (v == nullptr) return def;
        if (!v->is_number_unsigned()) throw ParseError(path(key) + ": expected a non-negative integer");
        return v->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) {
        const json* v = get(key);
        if (v == nullptr) return def;
        if (!v->is_boolean()) throw ParseError(path(key) + ": expected true or false");
        return v->get<bool>();
    }

    std::string string(const std::string& key, const std::string& def) {
        const json* v = get(key);
        if (v == nullptr) return def;
        if (!v->is_string()) throw ParseError(path(key) + ": expected a string");
        return v->get<std::string>();
    }

    template <class E, class Parse>
    E enumeration(const std::string& key, E def, Parse parse) {
        const json* v = get(key);
        if (v == nullptr) return def;
        if (!v->is_string()) throw ParseError(path(key) + ": expected a string");
        try {
            return parse(v->get<std::string>());
        } catch (const ArgumentError& e) {
            throw ParseError(path(key) + ": " + e.what());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) throw ParseError(path(it.key()) + ": unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

int to_int(long long v, const std::string& path) {
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ParseError(path + ": integer out of range");
    }
    return static_cast<int>(v);
}

ScheduleSpec parse_schedule(const json& j, const std::string& path) {
    Section s(j, path);
    ScheduleSpec o;
    o.kind = s.enumeration("kind", o.kind, schedule_kind_from_string);
    if (o.kind == ScheduleKind::VpLinear) {
        o.beta_min = s.number("beta_min", o.beta_min);
        o.beta_max = s.number("beta_max", o.beta_max);
    } else if (o.kind == ScheduleKind::Ve) {
        o.sigma_min = s.number("sigma_min", o.sigma_min);
        o.sigma_max = s.number("sigma_max", o.sigma_max);
    }
    o.T = s.opt_number("T");
    o.t_min = s.opt_number("t_min");
    o.tilde_sigma = s.opt_number("tilde_sigma");
    s.finish();
    return o;
}

json schedule_json(const ScheduleSpec& o) {
    json j;
    j["kind"] = to_string(o.kind);
    if (o.kind == ScheduleKind::VpLinear) {
        j["beta_min"] = o.beta_min;
        j["beta_max"] = o.beta_max;
    } else if (o.kind == ScheduleKind::Ve) {
        j["sigma_min"] = o.sigma_min;
        j["sigma_max"] = o.sigma_max;
    }
    if (o.T) j["T"] = *o.T;
    if (o.t_min) j["t_min"] = *o.t_min;
    if (o.tilde_sigma) j["tilde_sigma"] = *o.tilde_sigma;
    return j;
}

ProblemSpec parse_problem(const json& j, const std::string& path) {
    Section s(j, path);
    ProblemSpec o;
    if (const json* v = s.get("schedule")) o.schedule = parse_schedule(*v, s.path("schedule"));
    if (const json* v = s.get("components")) {
        if (!v->is_array()) throw ParseError(s.path("components") + ": expected an array");
        for (std::size_t n = 0; n < v->size(); ++n) {
            const std::string cp = s.path("components") + "[" + std::to_string(n) + "]";
            Section c((*v)[n], cp);
            MixtureComponent m;
            m.weight = c.number("weight", 1.0);
            m.scale2 = c.number("scale2", 1.0);
            const json* mean = c.get("mean");
            if (mean == nullptr || !mean->is_array() || mean->empty()) {
                throw ParseError(c.path("mean") + ": expected a non-empty array of numbers");
            }
            m.mean.resize(static_cast<Eigen::Index>(mean->size()));
            for (std::size_t q = 0; q < mean->size(); ++q) {
                if (!(*mean)[q].is_number()) throw ParseError(c.path("mean") + ": expected numbers");
                m.mean[static_cast<Eigen::Index>(q)] = (*mean)[q].get<double>();
            }
            c.finish();
            o.components.push_back(std::move(m));
        }
    }
    s.finish();
    return o;
}

json problem_json(const ProblemSpec& o) {
    json j;
    j["schedule"] = schedule_json(o.schedule);
    json comps = json::array();
    for (const auto& c : o.components) {
        comps.push_back({{"weight", c.weight}, {"scale2", c.scale2},
                         {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())}});
    }
    j["components"] = comps;
    return j;
}

SolverSpec parse_solver(const json& j, const std::string& path) {
    Section s(j, path);
    SolverSpec o;
    o.kind = s.enumeration("kind", o.kind, solver_kind_from_string);
    o.order = to_int(s.integer("order", o.order), s.path("order"));
    o.preset = s.enumeration("preset", o.preset, preset_from_string);
    o.prediction = s.enumeration("prediction", o.prediction, prediction_from_string);
    o.domain = s.enumeration("step_domain", o.domain, step_domain_from_string);
    o.nfe = to_int(s.integer("nfe", o.nfe), s.path("nfe"));
    s.finish();
    if (o.order < 1) throw ParseError(s.path("order") + ": must be >= 1");
    if (o.nfe < 1) throw ParseError(s.path("nfe") + ": must be >= 1");
    return o;
}

json solver_json(const SolverSpec& o) {
    return {{"kind", to_string(o.kind)},
            {"order", o.order},
            {"preset", to_string(o.preset)},
            {"prediction", to_string(o.prediction)},
            {"step_domain", to_string(o.domain)},
            {"nfe", o.nfe}};
}

GridSpec parse_grid(const json& j, const std::string& path) {
    Section s(j, path);
    GridSpec o;
    o.kind = s.enumeration("kind", o.kind, grid_kind_from_string);
    o.rho = s.number("rho", o.rho);
    o.clip_fraction = s.number("clip_fraction", o.clip_fraction);
    s.finish();
    if (!(o.rho > 0.0)) throw ParseError(s.path("rho") + ": must be > 0");
    if (!(o.clip_fraction > 0.0 && o.clip_fraction < 1.0)) throw ParseError(s.path("clip_fraction") + ": must lie in (0, 1)");
    return o;
}

json grid_json(const GridSpec& o) {
    return {{"kind", to_string(o.kind)}, {"rho", o.rho}, {"clip_fraction", o.clip_fraction}};
}

TeacherConfig parse_teacher(const json& j, const std::string& path) {
    Section s(j, path);
    TeacherConfig o;
    o.kind = s.enumeration("kind", o.kind, teacher_kind_from_string);
    o.rel_tol = s.number("rel_tol", o.rel_tol);
    o.abs_tol = s.number("abs_tol", o.abs_tol);
    o.max_steps = static_cast<long>(s.integer("max_steps", o.max_steps));
    o.fine_nfe = to_int(s.integer("fine_nfe", o.fine_nfe), s.path("fine_nfe"));
    o.fine_solver = s.enumeration("fine_solver", o.fine_solver, solver_kind_from_string);
    o.fine_order = to_int(s.integer("fine_order", o.fine_order), s.path("fine_order"));
    o.fine_preset = s.enumeration("fine_preset", o.fine_preset, preset_from_string);
    o.fine_prediction = s.enumeration("fine_prediction", o.fine_prediction, prediction_from_string);
    o.fine_grid = s.enumeration("fine_grid", o.fine_grid, grid_kind_from_string);
    s.finish();
    if (!(o.rel_tol > 0.0) || !(o.abs_tol > 0.0)) throw ParseError(path + ": tolerances must be > 0");
    return o;
}

json teacher_json(const TeacherConfig& o) {
    return {{"kind", to_string(o.kind)},
            {"rel_tol", o.rel_tol},
            {"abs_tol", o.abs_tol},
            {"max_steps", o.max_steps},
            {"fine_nfe", o.fine_nfe},
            {"fine_solver", to_string(o.fine_solver)},
            {"fine_order", o.fine_order},
            {"fine_preset", to_string(o.fine_preset)},
            {"fine_prediction", to_string(o.fine_prediction)},
            {"fine_grid", to_string(o.fine_grid)}};
}

AdamConfig parse_adam(const json& j, const std::string& path) {
    Section s(j, path);
    AdamConfig o;
    o.lr = s.number("lr", o.lr);
    o.beta1 = s.number("beta1", o.beta1);
    o.beta2 = s.number("beta2", o.beta2);
    o.eps = s.number("eps", o.eps);
    s.finish();
    return o;
}

json adam_json(const AdamConfig& o) {
    return {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

TrainConfig parse_train(const json& j, const std::string& path) {
    Section s(j, path);
    TrainConfig o;
    o.radius_scale = s.number("radius_scale", o.radius_scale);
    o.radius = s.opt_number("radius");
    o.epochs = to_int(s.integer("epochs", o.epochs), s.path("epochs"));
    o.alternations = to_int(s.integer("alternations", o.alternations), s.path("alternations"));
    o.phase_epochs = to_int(s.integer("phase_epochs", o.phase_epochs), s.path("phase_epochs"));
    o.batch_size = to_int(s.integer("batch_size", o.batch_size), s.path("batch_size"));
    if (const json* v = s.get("coeff_optimizer")) o.coeff_optimizer = parse_adam(*v, s.path("coeff_optimizer"));
    if (const json* v = s.get("time_optimizer")) o.time_optimizer = parse_adam(*v, s.path("time_optimizer"));
    o.lr_schedule = s.enumeration("lr_schedule", o.lr_schedule, lr_schedule_from_string);
    o.x_step = s.number("x_step", o.x_step);
    o.loss = s.enumeration("loss", o.loss, loss_kind_from_string);
    o.consistency = s.boolean("consistency", o.consistency);
    o.tied = s.boolean("tied", o.tied);
    o.learn_coeffs = s.boolean("learn_coeffs", o.learn_coeffs);
    o.learn_time = s.boolean("learn_time", o.learn_time);
    o.select_best = s.boolean("select_best", o.select_best);
    s.finish();
    if (o.batch_size < 1) throw ParseError(s.path("batch_size") + ": must be >= 1");
    if (o.epochs < 0) throw ParseError(s.path("epochs") + ": must be >= 0");
    if (o.alternations < 0) throw ParseError(s.path("alternations") + ": must be >= 0");
    if (o.phase_epochs < 0) throw ParseError(s.path("phase_epochs") + ": must be >= 0");
    if (o.radius && *o.radius < 0.0) throw ParseError(s.path("radius") + ": must be >= 0");
    return o;
}

json train_json(const TrainConfig& o) {
    json j = {{"radius_scale", o.radius_scale},
              {"epochs", o.epochs},
              {"alternations", o.alternations},
              {"phase_epochs", o.phase_epochs},
              {"batch_size", o.batch_size},
              {"coeff_optimizer", adam_json(o.coeff_optimizer)},
              {"time_optimizer", adam_json(o.time_optimizer)},
              {"lr_schedule", to_string(o.lr_schedule)},
              {"x_step", o.x_step},
              {"loss", to_string(o.loss)},
              {"consistency", o.consistency},
              {"tied", o.tied},
              {"learn_coeffs", o.learn_coeffs},
              {"learn_time", o.learn_time},
              {"select_best", o.select_best}};
    j["radius"] = o.radius ? json(*o.radius) : json(nullptr);
    return j;
}

template <class T, class F>
std::vector<T> parse_list(const json& v, const std::string& path, F each) {
    if (!v.is_array()) throw ParseError(path + ": expected an array");
    std::vector<T> out;
    for (std::size_t n = 0; n < v.size(); ++n) out.push_back(each(v[n], path + "[" + std::to_string(n) + "]"));
    return out;
}

template <class E, class Parse>
E parse_enum_value(const json& v, const std::string& path, Parse parse) {
    if (!v.is_string()) throw ParseError(path + ": expected a string");
    try {
        return parse(v.get<std::string>());
    } catch (const ArgumentError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

SweepSpec parse_sweep(const json& j, const std::string& path) {
    Section s(j, path);
    SweepSpec o;
    if (const json* v = s.get("grids")) {
        o.grids = parse_list<GridKind>(*v, s.path("grids"), [](const json& e, const std::string& p) {
            return parse_enum_value<GridKind>(e, p, grid_kind_from_string);
        });
    }
    if (const json* v = s.get("solvers")) o.solvers = parse_list<SolverSpec>(*v, s.path("solvers"), parse_solver);
    if (const json* v = s.get("modes")) {
        o.modes = parse_list<TrainMode>(*v, s.path("modes"), [](const json& e, const std::string& p) {
            return parse_enum_value<TrainMode>(e, p, train_mode_from_string);
        });
    }
    s.finish();
    return o;
}

json sweep_json(const SweepSpec& o) {
    json grids = json::array();
    for (auto g : o.grids) grids.push_back(to_string(g));
    json solvers = json::array();
    for (const auto& sv : o.solvers) solvers.push_back(solver_json(sv));
    json modes = json::array();
    for (auto m : o.modes) modes.push_back(to_string(m));
    return {{"grids", grids}, {"solvers", solvers}, {"modes", modes}};
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    Section s(j, "");
    ExperimentConfig c;
    c.version = to_int(s.integer("version", -1), "version");
    if (c.version != kConfigVersion) {
        throw ParseError("version: expected " + std::to_string(kConfigVersion) + ", got " + std::to_string(c.version));
    }
    c.seed = s.unsigned_integer("seed", c.seed);
    if (const json* v = s.get("problem")) c.problem = parse_problem(*v, "problem");
    if (const json* v = s.get("solver")) c.solver = parse_solver(*v, "solver");
    if (const json* v = s.get("grid")) c.grid = parse_grid(*v, "grid");
    if (const json* v = s.get("teacher")) c.teacher = parse_teacher(*v, "teacher");
    if (const json* v = s.get("dataset")) {
        Section d(*v, "dataset");
        const long long count = d.integer("count", static_cast<long long>(c.dataset.count));
        if (count < 1) throw ParseError("dataset.count: must be >= 1");
        c.dataset.count = static_cast<std::size_t>(count);
        c.dataset.validation_fraction = d.number("validation_fraction", c.dataset.validation_fraction);
        if (!(c.dataset.validation_fraction >= 0.0 && c.dataset.validation_fraction < 1.0)) {
            throw ParseError("dataset.validation_fraction: must lie in [0, 1)");
        }
        c.dataset.path = d.string("path", c.dataset.path);
        d.finish();
    }
    c.mode = s.enumeration("mode", c.mode, train_mode_from_string);
    if (const json* v = s.get("train")) c.train = parse_train(*v, "train");
    if (const json* v = s.get("evaluation")) {
        Section e(*v, "evaluation");
        const long long n = e.integer("samples", static_cast<long long>(c.evaluation.samples));
        if (n < 1) throw ParseError("evaluation.samples: must be >= 1");
        c.evaluation.samples = static_cast<std::size_t>(n);
        e.finish();
    }
    if (const json* v = s.get("nfe")) {
        c.nfe = parse_list<int>(*v, "nfe", [](const json& e, const std::string& p) {
            if (!e.is_number_integer() || e.get<long long>() < 1) throw ParseError(p + ": expected a positive integer");
            return static_cast<int>(e.get<long long>());
        });
    }
    if (const json* v = s.get("sweep")) c.sweep = parse_sweep(*v, "sweep");
    c.out_dir = s.string("out_dir", c.out_dir);
    s.finish();
    c.train.seed = c.seed;
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["version"] = c.version;
    j["seed"] = c.seed;
    j["problem"] = problem_json(c.problem);
    j["solver"] = solver_json(c.solver);
    j["grid"] = grid_json(c.grid);
    j["teacher"] = teacher_json(c.teacher);
    j["dataset"] = {{"count", c.dataset.count},
                    {"validation_fraction", c.dataset.validation_fraction},
                    {"path", c.dataset.path}};
    j["mode"] = to_string(c.mode);
    j["train"] = train_json(c.train);
    j["evaluation"] = {{"samples", c.evaluation.samples}};
    j["nfe"] = c.nfe;
    j["sweep"] = sweep_json(c.sweep);
    j["out_dir"] = c.out_dir;
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& config) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << config_to_json(config).dump(2) << '\n';
    if (!f) throw IoError("failed writing '" + path + "'");
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    const json j = config_to_json(config);
    const std::string bytes = json{{"problem", j["problem"]}, {"solver", j["solver"]}, {"grid", j["grid"]}}.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::optional<int> steps_for_nfe(SolverKind kind, int order, int nfe) {
    if (nfe < 1 || order < 1) return std::nullopt;
    int steps = 0;
    switch (kind) {
        case SolverKind::Lms: steps = nfe; break;
        case SolverKind::Pc: steps = nfe - 1; break;
        case SolverKind::Ss:
            if (nfe % order != 0) return std::nullopt;
            steps = nfe / order;
            break;
    }
    if (steps < 1) return std::nullopt;
    if (kind != SolverKind::Ss && steps < order) return std::nullopt;
    return steps;
}

}  // namespace fewstep
