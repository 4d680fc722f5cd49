#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "ldae/common.hpp"

namespace ldae::training {

// CSV training log: comment line with config hash and seed, then
// epoch,step,loss,lambda_mean,lr,wall_ms rows.
class TrainLog {
public:
    TrainLog() = default;
    TrainLog(const std::string& path, std::uint64_t config_hash, std::uint64_t seed) {
        if (path.empty()) return;
        os_.open(path, std::ios::binary);
        if (!os_) throw IoError("cannot open training log: " + path);
        os_ << "# config_hash=" << to_hex(config_hash) << " seed=" << seed << "\n";
        os_ << "epoch,step,loss,lambda_mean,lr,wall_ms\n";
    }

    void row(int epoch, std::int64_t step, double loss, double lambda_mean, double lr,
             double wall_ms) {
        if (!os_.is_open()) return;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%lld,%.9g,%.9g,%.9g,%.3f\n", epoch,
                      static_cast<long long>(step), loss, lambda_mean, lr, wall_ms);
        os_ << buf;
    }

    void comment(const std::string& text) {
        if (os_.is_open()) os_ << "# " << text << "\n";
    }

private:
    std::ofstream os_;
};

}  // namespace ldae::training
