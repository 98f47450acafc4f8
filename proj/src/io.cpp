#include "ganlink/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ganlink {

namespace {

constexpr char kMmteMagic[4] = {'M', 'M', 'T', 'E'};
constexpr std::uint32_t kMmteVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

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

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

bool get_bytes(std::istream& in, void* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!get_bytes(in, b, 4))
        throw FormatError(FormatError::Kind::truncated, "truncated file while reading " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
    unsigned char b[8];
    if (!get_bytes(in, b, 8))
        throw FormatError(FormatError::Kind::truncated, "truncated file while reading " + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_mmte_stream(std::ostream& out, const std::vector<std::size_t>& shape,
                       std::span<const float> values) {
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    if (count != values.size())
        throw UsageError("write_mmte: shape does not match value count");
    out.write(kMmteMagic, 4);
    put_u32(out, kMmteVersion);
    out.put(static_cast<char>(kDtypeF32));
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, d);
    for (float v : values) put_f32(out, v);
}

MmteTensor read_mmte_stream(std::istream& in, const std::string& context) {
    char magic[4];
    if (!get_bytes(in, magic, 4))
        throw FormatError(FormatError::Kind::truncated, "truncated header: " + context);
    if (std::memcmp(magic, kMmteMagic, 4) != 0)
        throw FormatError(FormatError::Kind::bad_magic, "not a MMTE tensor: " + context);
    std::uint32_t version = get_u32(in, "version");
    if (version != kMmteVersion)
        throw FormatError(FormatError::Kind::bad_version,
                          "unsupported MMTE version " + std::to_string(version) + ": " + context);
    char dtype = 0;
    if (!get_bytes(in, &dtype, 1))
        throw FormatError(FormatError::Kind::truncated, "truncated header: " + context);
    if (dtype != static_cast<char>(kDtypeF32))
        throw FormatError(FormatError::Kind::bad_dtype, "unsupported MMTE dtype: " + context);

    std::uint32_t ndim = get_u32(in, "ndim");
    MmteTensor t;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        std::uint64_t d = get_u64(in, "dims");
        if (d == 0) throw FormatError(FormatError::Kind::corrupt, "zero extent in " + context);
        t.shape.push_back(static_cast<std::size_t>(d));
        count *= static_cast<std::size_t>(d);
    }
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = get_u32(in, "elements");
        float v;
        std::memcpy(&v, &bits, 4);
        t.values[i] = v;
    }
    return t;
}

void write_mmte(const std::string& path, const std::vector<std::size_t>& shape,
                std::span<const float> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_mmte_stream(out, shape, values);
    if (!out) throw IoError("write failed: " + path);
}

MmteTensor read_mmte(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    return read_mmte_stream(in, path);
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.pixels.size() != 3 * img.width * img.height)
        throw UsageError("write_ppm: pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("write failed: " + path);
}

namespace {

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string next_ppm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

} // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string magic = next_ppm_token(in);
    if (magic != "P6")
        throw FormatError(FormatError::Kind::bad_magic, "not a P6 PPM file: " + path);
    std::string ws = next_ppm_token(in);
    std::string hs = next_ppm_token(in);
    std::string ms = next_ppm_token(in);
    if (ws.empty() || hs.empty() || ms.empty())
        throw FormatError(FormatError::Kind::truncated, "truncated PPM header: " + path);
    Image img;
    try {
        img.width = static_cast<std::size_t>(std::stoull(ws));
        img.height = static_cast<std::size_t>(std::stoull(hs));
    } catch (const std::exception&) {
        throw FormatError(FormatError::Kind::corrupt, "bad PPM dimensions: " + path);
    }
    if (ms != "255")
        throw FormatError(FormatError::Kind::corrupt, "unsupported PPM maxval: " + path);
    if (img.width == 0 || img.height == 0)
        throw FormatError(FormatError::Kind::corrupt, "degenerate PPM dimensions: " + path);
    img.pixels.resize(3 * img.width * img.height);
    if (!get_bytes(in, img.pixels.data(), img.pixels.size()))
        throw FormatError(FormatError::Kind::truncated, "truncated PPM pixel data: " + path);
    return img;
}

Image planar_to_image(std::span<const float> planar, std::size_t width, std::size_t height) {
    if (planar.size() != 3 * width * height)
        throw UsageError("planar_to_image: buffer does not match dimensions");
    Image img;
    img.width = width;
    img.height = height;
    img.pixels.resize(planar.size());
    const std::size_t plane = width * height;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            float v = (planar[c * plane + i] + 1.0f) * 127.5f;
            int q = static_cast<int>(std::lround(v));
            q = std::clamp(q, 0, 255);
            img.pixels[i * 3 + c] = static_cast<std::uint8_t>(q);
        }
    }
    return img;
}

std::vector<float> image_to_planar(const Image& img) {
    const std::size_t plane = img.width * img.height;
    std::vector<float> out(3 * plane);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c]) / 127.5f - 1.0f;
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

} // namespace ganlink
