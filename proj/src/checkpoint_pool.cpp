#include "fwmerge/checkpoint_pool.hpp"

#include <algorithm>
#include <set>

namespace fwmerge {

LoadedCheckpoint::LoadedCheckpoint(std::shared_ptr<const ParamSet> params,
                                   std::shared_ptr<PoolStats> stats)
    : params_(std::move(params)) {
    stats->on_acquire();
    // Token's deleter fires once per load, when the last handle copy dies.
    token_ = std::shared_ptr<void>(nullptr, [stats](void*) { stats->on_release(); });
}

CheckpointPool::CheckpointPool() : stats_(std::make_shared<PoolStats>()) {}

void CheckpointPool::add_file(std::string id, std::filesystem::path path) {
    if (find(id) >= 0) throw ConfigError("duplicate pool id '" + id + "'");
    entries_.push_back(Entry{std::move(id), std::move(path)});
    locks_.push_back(std::make_unique<std::mutex>());
    schema_.reset();
}

void CheckpointPool::add_in_memory(std::string id, ParamSet params) {
    if (find(id) >= 0) throw ConfigError("duplicate pool id '" + id + "'");
    entries_.push_back(Entry{std::move(id), std::make_shared<const ParamSet>(std::move(params))});
    locks_.push_back(std::make_unique<std::mutex>());
    schema_.reset();
}

CheckpointPool CheckpointPool::from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("pool directory '" + dir.string() + "' does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".fwck") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    CheckpointPool pool;
    for (auto& f : files) pool.add_file(f.stem().string(), f);
    return pool;
}

std::ptrdiff_t CheckpointPool::find(const std::string& id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].id == id) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
}

std::vector<std::string> CheckpointPool::ids() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.id);
    return out;
}

LoadedCheckpoint CheckpointPool::load(std::size_t i) const {
    const Entry& e = entries_.at(i);
    std::lock_guard<std::mutex> guard(*locks_[i]);
    if (std::holds_alternative<std::filesystem::path>(e.source)) {
        auto p = std::make_shared<const ParamSet>(
            load_checkpoint(std::get<std::filesystem::path>(e.source)));
        return LoadedCheckpoint(std::move(p), stats_);
    }
    return LoadedCheckpoint(std::get<std::shared_ptr<const ParamSet>>(e.source), stats_);
}

const ParamSchema& CheckpointPool::check_schema() const {
    if (entries_.empty()) throw EmptyPoolError("checkpoint pool is empty");
    auto entry_schema = [](const Entry& e) {
        if (std::holds_alternative<std::filesystem::path>(e.source)) {
            return read_checkpoint_schema(std::get<std::filesystem::path>(e.source));
        }
        return std::get<std::shared_ptr<const ParamSet>>(e.source)->schema();
    };
    ParamSchema first = entry_schema(entries_[0]);
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        first.require_same(entry_schema(entries_[i]), "pool entry '" + entries_[i].id + "'");
    }
    schema_ = std::move(first);
    return *schema_;
}

const ParamSchema& CheckpointPool::schema() const {
    if (!schema_) return check_schema();
    return *schema_;
}

CheckpointPool CheckpointPool::clone_sharing_stats() const {
    CheckpointPool out;
    out.stats_ = stats_;
    out.entries_ = entries_;
    out.locks_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        out.locks_.push_back(std::make_unique<std::mutex>());
    }
    out.schema_ = schema_;
    return out;
}

}  // namespace fwmerge
