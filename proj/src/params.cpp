#include "nigcast/params.hpp"

#include "nigcast/errors.hpp"

namespace nigcast {

void ParameterSet::add(std::string name, diff::Tensor value) {
    if (contains(name)) throw ContractError("ParameterSet: duplicate name '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ParameterSet::count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

std::size_t ParameterSet::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return i;
    }
    throw ContractError("ParameterSet: no parameter named '" + std::string(name) + "'");
}

const diff::Tensor& ParameterSet::get(std::string_view name) const { return entries_[index_of(name)].value; }

bool ParameterSet::contains(std::string_view name) const noexcept {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

std::vector<diff::Tensor> ParameterSet::tensors() const {
    std::vector<diff::Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
}

void ParameterSet::assign(const std::vector<diff::Tensor>& values) {
    if (values.size() != entries_.size()) throw ContractError("ParameterSet::assign: count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i].same_shape(entries_[i].value)) {
            throw ContractError("ParameterSet::assign: shape mismatch for '" + entries_[i].name + "'");
        }
        entries_[i].value = values[i];
    }
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name || !entries_[i].value.same_shape(other.entries_[i].value) ||
            entries_[i].value.values() != other.entries_[i].value.values()) {
            return false;
        }
    }
    return true;
}

BoundParams::BoundParams(diff::Tape& tape, const ParameterSet& set, bool trainable) : set_(&set) {
    vars_.reserve(set.size());
    for (const auto& e : set) vars_.push_back(trainable ? tape.parameter(e.value, e.name) : tape.constant(e.value));
}

diff::Var BoundParams::operator[](std::string_view name) const { return vars_[set_->index_of(name)]; }

}  // namespace nigcast
