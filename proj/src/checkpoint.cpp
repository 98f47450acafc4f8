#include "ganlink/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ganlink {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'H', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_bytes(std::istream& in, void* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!get_bytes(in, b, 4))
        throw FormatError(FormatError::Kind::truncated, "truncated checkpoint (" + what + ")");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
    unsigned char b[8];
    if (!get_bytes(in, b, 8))
        throw FormatError(FormatError::Kind::truncated, "truncated checkpoint (" + what + ")");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_name(std::ostream& out, const std::string& name) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string get_name(std::istream& in) {
    const std::uint32_t len = get_u32(in, "name length");
    if (len > 4096)
        throw FormatError(FormatError::Kind::corrupt, "implausible checkpoint name length");
    std::string name(len, '\0');
    if (!get_bytes(in, name.data(), len))
        throw FormatError(FormatError::Kind::truncated, "truncated checkpoint (name)");
    return name;
}

std::uint8_t kind_tag(ModelKind kind) {
    switch (kind) {
        case ModelKind::cgan: return 0;
        case ModelKind::ae: return 1;
        case ModelKind::bidnn: return 2;
    }
    return 255;
}

ModelKind kind_from_tag(std::uint8_t tag) {
    switch (tag) {
        case 0: return ModelKind::cgan;
        case 1: return ModelKind::ae;
        case 2: return ModelKind::bidnn;
        default:
            throw FormatError(FormatError::Kind::corrupt,
                              "unknown model kind tag " + std::to_string(tag));
    }
}

} // namespace

void write_checkpoint_raw(const CheckpointRaw& raw, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    out.put(static_cast<char>(kind_tag(raw.kind)));
    put_u64(out, raw.seed);
    put_u64(out, raw.epochs);
    put_u32(out, static_cast<std::uint32_t>(raw.config.size()));
    out.write(raw.config.data(), static_cast<std::streamsize>(raw.config.size()));

    auto write_section = [&](const std::vector<std::pair<std::string, MmteTensor>>& entries) {
        put_u32(out, static_cast<std::uint32_t>(entries.size()));
        for (const auto& [name, payload] : entries) {
            put_name(out, name);
            write_mmte_stream(out, payload.shape, payload.values);
        }
    };
    write_section(raw.params);
    write_section(raw.disc_params);

    put_u32(out, static_cast<std::uint32_t>(raw.bn.size()));
    for (const auto& [name, mean, var] : raw.bn) {
        put_name(out, name);
        write_mmte_stream(out, mean.shape, mean.values);
        write_mmte_stream(out, var.shape, var.values);
    }
    if (!out) throw IoError("write failed: " + path);
}

CheckpointRaw read_checkpoint_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    char magic[4];
    if (!get_bytes(in, magic, 4))
        throw FormatError(FormatError::Kind::truncated, "truncated checkpoint header: " + path);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(FormatError::Kind::bad_magic, "not a CGHL checkpoint: " + path);
    const std::uint32_t version = get_u32(in, "version");
    if (version != kVersion)
        throw FormatError(FormatError::Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));

    CheckpointRaw raw;
    char tag = 0;
    if (!get_bytes(in, &tag, 1))
        throw FormatError(FormatError::Kind::truncated, "truncated checkpoint (kind)");
    raw.kind = kind_from_tag(static_cast<std::uint8_t>(tag));
    raw.seed = get_u64(in, "seed");
    raw.epochs = get_u64(in, "epochs");
    const std::uint32_t config_len = get_u32(in, "config length");
    raw.config.resize(config_len);
    if (!get_bytes(in, raw.config.data(), config_len))
        throw FormatError(FormatError::Kind::truncated, "truncated checkpoint (config)");

    auto read_section = [&](std::vector<std::pair<std::string, MmteTensor>>& entries) {
        const std::uint32_t count = get_u32(in, "section count");
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = get_name(in);
            MmteTensor payload = read_mmte_stream(in, path + ":" + name);
            entries.emplace_back(std::move(name), std::move(payload));
        }
    };
    read_section(raw.params);
    read_section(raw.disc_params);

    const std::uint32_t bn_count = get_u32(in, "batchnorm count");
    for (std::uint32_t i = 0; i < bn_count; ++i) {
        std::string name = get_name(in);
        MmteTensor mean = read_mmte_stream(in, path + ":" + name + ".mean");
        MmteTensor var = read_mmte_stream(in, path + ":" + name + ".var");
        raw.bn.emplace_back(std::move(name), std::move(mean), std::move(var));
    }
    return raw;
}

} // namespace ganlink
