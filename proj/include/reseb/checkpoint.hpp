#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "reseb/array.hpp"

namespace reseb {

// Named, insertion-ordered collection of weight arrays. Order is part of the
// on-disk contract: checkpoints round-trip bit-exact including ordering.
class ParameterSet {
public:
    NumArray& add(const std::string& name, NumArray value);
    NumArray& at(const std::string& name);
    const NumArray& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    std::size_t count() const { return items_.size(); }
    std::int64_t total_values() const;

    const std::vector<std::pair<std::string, NumArray>>& items() const { return items_; }
    std::vector<std::pair<std::string, NumArray>>& items() { return items_; }

private:
    std::vector<std::pair<std::string, NumArray>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Flat binary container: magic "RESEB1", then per-array records of
// (name length, name bytes, rank, extents, values), all integers and doubles
// 64-bit little-endian.
void save_checkpoint(const std::string& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);

} // namespace reseb
