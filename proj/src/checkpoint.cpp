#include "reseb/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace reseb {

namespace {

constexpr char kMagic[6] = {'R', 'E', 'S', 'E', 'B', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ContractError("checkpoint: truncated integer field");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) {
    std::uint64_t v = 0;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

double get_f64(std::istream& is) {
    std::uint64_t v = get_u64(is);
    double d = 0.0;
    std::memcpy(&d, &v, 8);
    return d;
}

} // namespace

NumArray& ParameterSet::add(const std::string& name, NumArray value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(value));
    return items_.back().second;
}

NumArray& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

const NumArray& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

std::int64_t ParameterSet::total_values() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : items_) n += v.size();
    return n;
}

void save_checkpoint(const std::string& path, const ParameterSet& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ContractError("cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    for (const auto& [name, arr] : params.items()) {
        put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(os, static_cast<std::uint64_t>(arr.rank()));
        for (int d = 0; d < arr.rank(); ++d) put_u64(os, static_cast<std::uint64_t>(arr.extent(d)));
        for (std::int64_t i = 0; i < arr.size(); ++i) put_f64(os, arr[i]);
    }
    if (!os) throw ContractError("write failure on '" + path + "'");
}

ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open '" + path + "'");
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kMagic, 6) != 0) {
        throw ContractError("'" + path + "' is not a RESEB1 container");
    }
    ParameterSet out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const std::uint64_t name_len = get_u64(is);
        if (name_len > (1u << 20)) throw ContractError("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        const std::uint64_t rank = get_u64(is);
        if (rank < 1 || rank > 3) throw ContractError("checkpoint: rank out of range for '" + name + "'");
        Shape shape;
        for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(get_u64(is)));
        const std::int64_t n = shape_size(shape);
        std::vector<double> data(static_cast<std::size_t>(n));
        for (auto& v : data) v = get_f64(is);
        if (!is) throw ContractError("checkpoint: truncated record for '" + name + "'");
        out.add(name, NumArray(std::move(shape), std::move(data)));
    }
    return out;
}

} // namespace reseb
