#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ldae {

struct InvalidParams : std::runtime_error {
    explicit InvalidParams(const std::string& m) : std::runtime_error("InvalidParams: " + m) {}
};
struct InvalidRange : std::runtime_error {
    explicit InvalidRange(const std::string& m) : std::runtime_error("InvalidRange: " + m) {}
};
struct OutOfRange : std::runtime_error {
    explicit OutOfRange(const std::string& m) : std::runtime_error("OutOfRange: " + m) {}
};
struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& m) : std::runtime_error("ShapeMismatch: " + m) {}
};
struct InvalidSigma : std::runtime_error {
    explicit InvalidSigma(const std::string& m) : std::runtime_error("InvalidSigma: " + m) {}
};
struct NonFinite : std::runtime_error {
    explicit NonFinite(const std::string& m) : std::runtime_error("NonFinite: " + m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("IoError: " + m) {}
};
struct Diverged : std::runtime_error {
    explicit Diverged(const std::string& m) : std::runtime_error("Diverged: " + m) {}
};
struct MissingParent : std::runtime_error {
    explicit MissingParent(const std::string& m) : std::runtime_error("MissingParent: " + m) {}
};
struct FrozenViolation : std::runtime_error {
    explicit FrozenViolation(const std::string& m) : std::runtime_error("FrozenViolation: " + m) {}
};
struct DegenerateLabels : std::runtime_error {
    explicit DegenerateLabels(const std::string& m) : std::runtime_error("DegenerateLabels: " + m) {}
};
struct IndivisibleGroups : std::runtime_error {
    explicit IndivisibleGroups(const std::string& m) : std::runtime_error("IndivisibleGroups: " + m) {}
};
struct IndivisibleHeads : std::runtime_error {
    explicit IndivisibleHeads(const std::string& m) : std::runtime_error("IndivisibleHeads: " + m) {}
};
struct EmptySequence : std::runtime_error {
    explicit EmptySequence(const std::string& m) : std::runtime_error("EmptySequence: " + m) {}
};
struct SpecInvalid : std::runtime_error {
    explicit SpecInvalid(const std::string& m) : std::runtime_error("SpecInvalid: " + m) {}
};
struct ZeroVector : std::runtime_error {
    explicit ZeroVector(const std::string& m) : std::runtime_error("ZeroVector: " + m) {}
};

// FNV-1a, used for checkpoint chain integrity and config hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
    return s;
}

// Worker cap from LDAE_THREADS; unset or <=1 means fully sequential.
inline int worker_count() {
    const char* env = std::getenv("LDAE_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n > 1 ? n : 1;
}

// Runs fn(i) for i in [0, n). Each index must write only its own outputs so
// results are identical for any worker count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    int workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::int64_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([=, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace ldae
