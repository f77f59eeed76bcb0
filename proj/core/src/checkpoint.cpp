#include "fewstep/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fewstep/errors.hpp"

namespace fewstep {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
    }
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void vec(const Vector& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Eigen::Index q = 0; q < v.size(); ++q) f64(v[q]);
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void str(const std::string& s) {
        u64(s.size());
        out += s;
    }

    std::string out;
};

class Reader {
public:
    explicit Reader(const std::string& b) : buf(b) {}

    void need(std::uint64_t n) const {
        if (n > buf.size() - pos) throw IoError("checkpoint file is truncated");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + b])) << (8 * b);
        pos += 8;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + b])) << (8 * b);
        pos += 4;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Vector vec() {
        const std::uint64_t n = u64();
        need(8 * n);
        Vector v(static_cast<Eigen::Index>(n));
        for (std::uint64_t q = 0; q < n; ++q) v[static_cast<Eigen::Index>(q)] = f64();
        return v;
    }
    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        need(8 * n);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }

    const std::string& buf;
    std::size_t pos = 0;
};

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& c) {
    Writer w;
    w.out.assign(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(c.config_hash);
    w.str(c.config_json);
    w.str(c.mode);
    w.u32(static_cast<std::uint32_t>(c.dim));
    w.u32(static_cast<std::uint32_t>(c.coeffs.kind()));
    w.u32(static_cast<std::uint32_t>(c.coeffs.order()));
    w.u32(static_cast<std::uint32_t>(c.coeffs.steps()));
    w.u32(static_cast<std::uint32_t>(c.coeffs.prediction()));
    w.u32(static_cast<std::uint32_t>(c.coeffs.step_domain()));
    w.vec(c.coeffs.values());
    w.doubles(c.grid.steps);
    w.doubles(c.grid.score_times);
    w.vec(c.params.xi);
    w.vec(c.params.xi_c);
    w.f64(c.params.clip_fraction);
    w.f64(c.radius);
    w.u64(static_cast<std::uint64_t>(c.updates));
    w.u32(c.diverged ? 1 : 0);
    w.u64(c.x_prime.size());
    for (const auto& [id, x] : c.x_prime) {
        w.u64(id);
        w.vec(x);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(w.out.data(), static_cast<std::streamsize>(w.out.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(buf);
    r.need(sizeof kMagic);
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw IoError("'" + path + "' is not a checkpoint file");
    r.pos = sizeof kMagic;
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config_hash = r.u64();
    c.config_json = r.str();
    c.mode = r.str();
    c.dim = static_cast<int>(r.u32());
    const auto kind = r.u32();
    const auto order = r.u32();
    const auto steps = r.u32();
    const auto prediction = r.u32();
    const auto domain = r.u32();
    if (kind > 2 || prediction > 1 || domain > 1) throw IoError("corrupt checkpoint header in '" + path + "'");
    try {
        c.coeffs = SolverCoefficients(static_cast<SolverKind>(kind), static_cast<int>(order), static_cast<int>(steps),
                                      static_cast<Prediction>(prediction), static_cast<StepDomain>(domain));
        c.coeffs.set_values(r.vec());
    } catch (const ArgumentError& e) {
        throw IoError("corrupt checkpoint coefficients in '" + path + "': " + e.what());
    }
    c.grid.steps = r.doubles();
    c.grid.score_times = r.doubles();
    c.params.xi = r.vec();
    c.params.xi_c = r.vec();
    c.params.clip_fraction = r.f64();
    c.radius = r.f64();
    c.updates = static_cast<long>(r.u64());
    c.diverged = r.u32() != 0;
    const std::uint64_t n = r.u64();
    for (std::uint64_t q = 0; q < n; ++q) {
        const std::uint64_t id = r.u64();
        c.x_prime.emplace_back(id, r.vec());
    }
    if (r.pos != buf.size()) throw IoError("trailing bytes in checkpoint '" + path + "'");
    if (c.grid.N() != c.coeffs.steps()) throw IoError("checkpoint grid and coefficients disagree on N");
    return c;
}

void check_compatibility(const Checkpoint& checkpoint, const ExperimentConfig& config, bool force) {
    const int dim = config.problem.build_model().dim();
    if (checkpoint.dim != dim) {
        throw CompatibilityError("checkpoint dim " + std::to_string(checkpoint.dim) + " differs from config dim " +
                                 std::to_string(dim));
    }
    const auto steps = steps_for_nfe(config.solver.kind, config.solver.order, config.solver.nfe);
    if (!steps || *steps != checkpoint.coeffs.steps()) {
        throw CompatibilityError("checkpoint N = " + std::to_string(checkpoint.coeffs.steps()) +
                                 " differs from the config's solver step count");
    }
    if (checkpoint.coeffs.kind() != config.solver.kind || checkpoint.coeffs.order() != config.solver.order) {
        throw CompatibilityError("checkpoint solver kind/order differs from config");
    }
    const std::uint64_t h = config_hash(config);
    if (h != checkpoint.config_hash && !force) {
        std::ostringstream os;
        os << "checkpoint config hash " << std::hex << checkpoint.config_hash << " differs from " << h
           << " (use --force to evaluate anyway)";
        throw CompatibilityError(os.str());
    }
}

}  // namespace fewstep
