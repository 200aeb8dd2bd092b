#include "patchkit/patch_io.hpp"

#include <array>
#include <iterator>
#include <bit>
#include <cstring>
#include <fstream>

#include "patchkit/error.hpp"
#include "patchkit/image_io.hpp"

namespace patchkit {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'C', 'H'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

}  // namespace

void save_patch(const std::filesystem::path& path, const Patch& patch) {
    patch.validate();
    std::vector<char> bytes(kMagic, kMagic + 4);
    put_u32(bytes, static_cast<std::uint32_t>(patch.height()));
    put_u32(bytes, static_cast<std::uint32_t>(patch.width()));
    put_u32(bytes, 0);
    for (double v : patch.values()) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + path.string());
}

Patch load_patch(const std::filesystem::path& path, std::optional<std::pair<int, int>> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open patch file " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16) {
        if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0)
            throw IoError("bad magic in " + path.string());
        throw IoError("truncated patch file " + path.string());
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("bad magic in " + path.string());
    const std::uint32_t h = get_u32(bytes.data() + 4);
    const std::uint32_t w = get_u32(bytes.data() + 8);
    if (h == 0 || w == 0 || h > 1u << 15 || w > 1u << 15)
        throw IoError("dimension mismatch: header declares " + std::to_string(h) + "x" + std::to_string(w));
    const std::size_t need = 16 + static_cast<std::size_t>(h) * w * 3 * 4;
    if (bytes.size() < need) throw IoError("truncated patch file " + path.string());
    if (bytes.size() > need)
        throw IoError("dimension mismatch: " + path.string() + " has more data than its header declares");
    if (expected && (expected->first != static_cast<int>(h) || expected->second != static_cast<int>(w)))
        throw IoError("dimension mismatch: expected " + std::to_string(expected->first) + "x" +
                      std::to_string(expected->second) + ", file has " + std::to_string(h) + "x" + std::to_string(w));

    Patch patch(static_cast<int>(h), static_cast<int>(w));
    auto v = patch.values();
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i)));
    patch.validate();
    return patch;
}

void save_patch_png(const std::filesystem::path& path, const Patch& patch) { write_png(path, patch); }

}  // namespace patchkit
