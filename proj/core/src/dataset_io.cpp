#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fewstep/errors.hpp"
#include "fewstep/teacher.hpp"

namespace fewstep {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'D', 'S', 'E', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_vec(std::string& out, const Vector& v) {
    for (Eigen::Index q = 0; q < v.size(); ++q) put_u64(out, std::bit_cast<std::uint64_t>(v[q]));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("dataset file is truncated");
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
    Vector vec(int dim) {
        Vector v(dim);
        for (int q = 0; q < dim; ++q) v[q] = std::bit_cast<double>(u64());
        return v;
    }
};

std::string serialize(const Dataset& ds) {
    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(ds.dim));
    put_u64(out, ds.records.size());
    put_u64(out, ds.train_count);
    for (const auto& r : ds.records) {
        put_u64(out, r.id);
        put_vec(out, r.x_T);
        put_vec(out, r.x_T_prime);
        put_vec(out, r.teacher_out);
    }
    return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& dataset) {
    for (const auto& r : dataset.records) {
        if (r.x_T.size() != dataset.dim || r.x_T_prime.size() != dataset.dim || r.teacher_out.size() != dataset.dim) {
            throw ArgumentError("dataset record dimension differs from declared dim");
        }
    }
    const std::string bytes = serialize(dataset);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset '" + path + "'");
    const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader rd{buf};
    rd.need(sizeof kMagic);
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw IoError("'" + path + "' is not a dataset file");
    rd.pos = sizeof kMagic;
    const std::uint32_t version = rd.u32();
    if (version != kVersion) throw IoError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.dim = static_cast<int>(rd.u32());
    const std::uint64_t count = rd.u64();
    ds.train_count = rd.u64();
    if (ds.dim < 1 || ds.train_count > count) throw IoError("corrupt dataset header in '" + path + "'");
    rd.need(count * (8 + 24 * static_cast<std::uint64_t>(ds.dim)));
    ds.records.resize(count);
    for (auto& r : ds.records) {
        r.id = rd.u64();
        r.x_T = rd.vec(ds.dim);
        r.x_T_prime = rd.vec(ds.dim);
        r.teacher_out = rd.vec(ds.dim);
    }
    if (rd.pos != buf.size()) throw IoError("trailing bytes in dataset file '" + path + "'");
    return ds;
}

std::uint64_t dataset_checksum(const Dataset& dataset) { return fnv1a(serialize(dataset)); }

}  // namespace fewstep
