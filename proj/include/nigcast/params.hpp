#pragma once

#include "nigcast/diffkit.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace nigcast {

struct NamedTensor {
    std::string name;
    diff::Tensor value;
};

/// Ordered, named collection of trainable tensors.
class ParameterSet {
public:
    void add(std::string name, diff::Tensor value);

    std::size_t size() const noexcept { return entries_.size(); }
    /// Total number of scalar parameters.
    std::size_t count() const noexcept;

    const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }
    NamedTensor& operator[](std::size_t i) { return entries_[i]; }
    const diff::Tensor& get(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;
    bool contains(std::string_view name) const noexcept;

    std::vector<diff::Tensor> tensors() const;
    void assign(const std::vector<diff::Tensor>& values);

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool operator==(const ParameterSet& other) const;

private:
    std::vector<NamedTensor> entries_;
};

/// Parameters placed on a tape, addressable by name.
class BoundParams {
public:
    BoundParams(diff::Tape& tape, const ParameterSet& set, bool trainable = true);

    diff::Var operator[](std::string_view name) const;
    const std::vector<diff::Var>& vars() const noexcept { return vars_; }

private:
    const ParameterSet* set_;
    std::vector<diff::Var> vars_;
};

}  // namespace nigcast
