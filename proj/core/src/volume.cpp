#include "ldae/volume.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "ldae/common.hpp"

namespace ldae {

namespace {

constexpr char kMagic[8] = {'L', 'D', 'A', 'E', 'V', 'O', 'L', '1'};

void put_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void Volume::validate() const {
    for (double x : v) {
        if (!std::isfinite(x)) throw NonFinite("volume voxel not finite");
        if (x < 0.0 || x > 1.0) throw InvalidParams("volume voxel outside [0,1]");
    }
}

Tensor Volume::to_tensor() const {
    Tensor t({1, depth, height, width});
    t.v.assign(v.begin(), v.end());
    return t;
}

Volume Volume::from_tensor(const Tensor& t) {
    if (t.shape.size() != 4 || t.shape[0] != 1)
        throw ShapeMismatch("Volume::from_tensor expects (1,d,h,w), got " + t.shape_str());
    Volume vol(t.shape[1], t.shape[2], t.shape[3]);
    vol.v.assign(t.v.begin(), t.v.end());
    return vol;
}

Volume clamp01(Volume v) {
    for (auto& x : v.v) x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    return v;
}

void write_volume_file(const std::string& path, const Tensor& t) {
    if (t.shape.size() != 4) throw ShapeMismatch("volume file needs (c,d,h,w), got " + t.shape_str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(kMagic, 8);
    for (int i = 0; i < 4; ++i) put_u32(os, static_cast<std::uint32_t>(t.shape[i]));
    std::vector<float> buf(t.v.size());
    for (std::size_t i = 0; i < t.v.size(); ++i) buf[i] = static_cast<float>(t.v[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!os) throw IoError("short write: " + path);
}

Tensor read_volume_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("bad magic in " + path);
    std::vector<int> shape(4);
    for (int i = 0; i < 4; ++i) shape[i] = static_cast<int>(get_u32(is));
    Tensor t(shape);
    std::vector<float> buf(t.v.size());
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!is) throw IoError("short read: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) t.v[i] = static_cast<double>(buf[i]);
    return t;
}

void write_volume_file(const std::string& path, const Volume& vol) {
    write_volume_file(path, vol.to_tensor());
}

Volume read_volume_file_single(const std::string& path) {
    return Volume::from_tensor(read_volume_file(path));
}

}  // namespace ldae
