#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fwmerge/checkpoint_io.hpp"
#include "fwmerge/param_set.hpp"

namespace fwmerge {

// Counts checkpoint loads and simultaneously-resident checkpoints. The
// peak backs the constant-memory contract: FW variants must stay at
// <= k + 2 resident checkpoints however large the pool is.
class PoolStats {
public:
    void on_acquire() {
        loads_.fetch_add(1, std::memory_order_relaxed);
        bump(resident_.fetch_add(1, std::memory_order_relaxed) + 1);
    }
    void on_release() { resident_.fetch_sub(1, std::memory_order_relaxed); }

    // Accounts for checkpoint-sized buffers assembled outside of load()
    // (e.g. per-layer composite vertices built from a streamed pass).
    void add_synthetic(long n) { bump(resident_.fetch_add(n, std::memory_order_relaxed) + n); }
    void remove_synthetic(long n) { resident_.fetch_sub(n, std::memory_order_relaxed); }

    long loads() const { return loads_.load(); }
    long resident() const { return resident_.load(); }
    long peak_resident() const { return peak_.load(); }

    void reset() {
        loads_ = 0;
        resident_ = 0;
        peak_ = 0;
    }

private:
    void bump(long now) {
        long prev = peak_.load(std::memory_order_relaxed);
        while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
        }
    }

    std::atomic<long> loads_{0};
    std::atomic<long> resident_{0};
    std::atomic<long> peak_{0};
};

// RAII guard for synthetic residency (see PoolStats::add_synthetic).
class SyntheticResidency {
public:
    SyntheticResidency(PoolStats& stats, long n) : stats_(&stats), n_(n) {
        stats_->add_synthetic(n_);
    }
    ~SyntheticResidency() {
        if (stats_) stats_->remove_synthetic(n_);
    }
    SyntheticResidency(SyntheticResidency&& other) noexcept
        : stats_(other.stats_), n_(other.n_) {
        other.stats_ = nullptr;
    }
    SyntheticResidency(const SyntheticResidency&) = delete;
    SyntheticResidency& operator=(const SyntheticResidency&) = delete;
    SyntheticResidency& operator=(SyntheticResidency&&) = delete;

private:
    PoolStats* stats_;
    long n_;
};

// Handle to one loaded checkpoint; releasing the last copy decrements the
// pool's residency counter.
class LoadedCheckpoint {
public:
    LoadedCheckpoint() = default;
    LoadedCheckpoint(std::shared_ptr<const ParamSet> params, std::shared_ptr<PoolStats> stats);

    const ParamSet& get() const { return *params_; }
    const ParamSet& operator*() const { return *params_; }
    const ParamSet* operator->() const { return params_.get(); }
    explicit operator bool() const { return static_cast<bool>(params_); }

private:
    std::shared_ptr<const ParamSet> params_;
    std::shared_ptr<void> token_;
};

// Ordered collection of lazily loadable checkpoints (the merging-pool
// vertices). Entries may live on disk (FWCK) or in memory; loading entry
// i never materializes more than that one entry.
class CheckpointPool {
public:
    CheckpointPool();

    void add_file(std::string id, std::filesystem::path path);
    void add_in_memory(std::string id, ParamSet params);

    // All .fwck files in `dir`, sorted by filename; ids are the stems.
    static CheckpointPool from_directory(const std::filesystem::path& dir);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::string& id(std::size_t i) const { return entries_[i].id; }
    std::ptrdiff_t find(const std::string& id) const;
    std::vector<std::string> ids() const;

    LoadedCheckpoint load(std::size_t i) const;

    // Verifies every entry matches the first entry's layer signature and
    // caches it. File entries are checked from headers only.
    // Throws EmptyPoolError on an empty pool, SchemaError (with the
    // offending id) on mismatch.
    const ParamSchema& check_schema() const;
    const ParamSchema& schema() const;  // requires a prior check_schema()

    PoolStats& stats() const { return *stats_; }

    // A copy whose loads/residency are recorded on this pool's meter;
    // used to append the base model as an extra vertex without losing
    // instrumentation.
    CheckpointPool clone_sharing_stats() const;

private:
    struct Entry {
        std::string id;
        std::variant<std::filesystem::path, std::shared_ptr<const ParamSet>> source;
    };

    std::vector<Entry> entries_;
    std::shared_ptr<PoolStats> stats_;
    // Per-entry locks: loads of the same entry are serialized, distinct
    // entries may load concurrently.
    mutable std::vector<std::unique_ptr<std::mutex>> locks_;
    mutable std::optional<ParamSchema> schema_;
};

}  // namespace fwmerge
