// Shared error types, seeded randomness and deterministic parallel loops.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace specflat {

/// Failure categories; each maps onto a CLI exit code.
enum class ErrorKind {
    Input,         ///< malformed or out-of-range input (exit 1)
    Unsupported,   ///< input outside the regime the construction supports (exit 1)
    Lookup,        ///< missing table entry (exit 1)
    Verification,  ///< a checked property or bound failed (exit 2)
    Optimization,  ///< optimizer found no finite objective value (exit 2)
    Resource,      ///< size limit exceeded (exit 3)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

int exit_code_for(ErrorKind kind) noexcept;

/// The single RNG engine type used everywhere; always passed explicitly.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer, used for stable seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable hash of a master seed with a list of indices (order-sensitive).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

/// Number of worker threads used by parallel loops (defaults to hardware concurrency).
void set_thread_count(unsigned n);
unsigned thread_count() noexcept;

/// Runs body(chunk_index) for chunk_index in [0, n_chunks) on the worker pool.
/// Work is partitioned by chunk index only, so results that are reduced in
/// chunk order are independent of the number of threads.
void parallel_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& body);

}  // namespace specflat
