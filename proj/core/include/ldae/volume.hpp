#pragma once

#include <string>
#include <vector>

#include "ldae/tensor.hpp"

namespace ldae {

// Single-channel 3D scalar field in [0,1].
struct Volume {
    int depth = 0, height = 0, width = 0;
    std::vector<double> v;

    Volume() = default;
    Volume(int d, int h, int w) : depth(d), height(h), width(w), v(static_cast<std::size_t>(d) * h * w, 0.0) {}

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    std::int64_t index(int d, int h, int w) const {
        return (static_cast<std::int64_t>(d) * height + h) * width + w;
    }
    double& at(int d, int h, int w) { return v[index(d, h, w)]; }
    double at(int d, int h, int w) const { return v[index(d, h, w)]; }

    bool same_dims(const Volume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }

    // finite, min >= 0, max <= 1
    void validate() const;

    Tensor to_tensor() const;  // shape (1, depth, height, width)
    static Volume from_tensor(const Tensor& t);
};

Volume clamp01(Volume v);

// "LDAEVOL1" volume container: magic, four LE u32 (channels, depth, height,
// width), then LE f32 data in (channel, depth, height, width) order.
void write_volume_file(const std::string& path, const Tensor& t);
Tensor read_volume_file(const std::string& path);

void write_volume_file(const std::string& path, const Volume& vol);
Volume read_volume_file_single(const std::string& path);

}  // namespace ldae
