#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fields.hpp"

namespace abimhd {

// "ABIM" | version u8 = 1 | nx ny nz u32 LE | count u16 LE | count * n^3 f64 LE
inline constexpr std::uint8_t snapshot_version = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T value)
{
    static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const std::string& path)
{
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw InvalidArgument("snapshot " + path + ": truncated file");
    return value;
}

} // namespace detail

struct Snapshot {
    GridSpec grid;
    std::vector<ScalarField> components;
};

inline void write_snapshot(const std::string& path, const std::vector<ScalarField>& comps)
{
    if (comps.empty()) throw InvalidArgument("snapshot needs at least one component");
    if (comps.size() > 0xffff) throw InvalidArgument("too many snapshot components");
    GridSpec g = comps.front().grid;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open " + path + " for writing");
    os.write("ABIM", 4);
    detail::put_le<std::uint8_t>(os, snapshot_version);
    for (int a = 0; a < 3; ++a) detail::put_le<std::uint32_t>(os, std::uint32_t(g.n));
    detail::put_le<std::uint16_t>(os, std::uint16_t(comps.size()));
    for (const auto& f : comps) {
        if (!(f.grid == g)) throw InvalidArgument("snapshot components on different grids");
        os.write(reinterpret_cast<const char*>(f.v.data()), std::streamsize(f.v.size() * sizeof(double)));
    }
    if (!os) throw InvalidArgument("write failed for " + path);
}

inline void write_snapshot(const std::string& path, const ScalarField& h, const VectorField3& B)
{
    write_snapshot(path, {h, B[0], B[1], B[2]});
}

inline Snapshot read_snapshot(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot open snapshot " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ABIM", 4) != 0) throw InvalidArgument("snapshot " + path + ": bad magic");
    auto version = detail::get_le<std::uint8_t>(is, path);
    if (version != snapshot_version) {
        throw InvalidArgument("snapshot " + path + ": unsupported version " + std::to_string(version));
    }
    std::uint32_t dims[3];
    for (auto& d : dims) d = detail::get_le<std::uint32_t>(is, path);
    if (dims[0] != dims[1] || dims[1] != dims[2]) {
        throw InvalidArgument("snapshot " + path + ": only cubic grids are supported");
    }
    auto count = detail::get_le<std::uint16_t>(is, path);
    Snapshot snap{GridSpec(int(dims[0])), {}};
    for (int c = 0; c < count; ++c) {
        ScalarField f(snap.grid);
        is.read(reinterpret_cast<char*>(f.v.data()), std::streamsize(f.v.size() * sizeof(double)));
        if (!is) throw InvalidArgument("snapshot " + path + ": truncated data");
        snap.components.push_back(std::move(f));
    }
    return snap;
}

// Coefficient sidecar: u64 LE count followed by f64 LE values.
inline void write_coefficients(const std::string& path, const std::vector<std::vector<double>>& blocks)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open " + path + " for writing");
    for (const auto& b : blocks) {
        detail::put_le<std::uint64_t>(os, b.size());
        os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size() * sizeof(double)));
    }
}

inline std::vector<std::vector<double>> read_coefficients(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot open " + path);
    std::vector<std::vector<double>> blocks;
    while (is.peek() != std::char_traits<char>::eof()) {
        auto len = detail::get_le<std::uint64_t>(is, path);
        std::vector<double> b(len);
        is.read(reinterpret_cast<char*>(b.data()), std::streamsize(len * sizeof(double)));
        if (!is) throw InvalidArgument(path + ": truncated coefficient block");
        blocks.push_back(std::move(b));
    }
    return blocks;
}

} // namespace abimhd
