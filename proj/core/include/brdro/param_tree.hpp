#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace brdro {

// Named real arrays with fixed shapes. Vectors are stored as n x 1 matrices.
// The flat index runs over entries in insertion order, column-major within
// each entry.
class ParamTree {
 public:
  struct Entry {
    std::string name;
    Eigen::MatrixXd value;
  };

  /// Throws InputError on a duplicate name or a non-finite value.
  void add(std::string name, Eigen::MatrixXd value);

  bool contains(std::string_view name) const;
  const Eigen::MatrixXd& at(std::string_view name) const;
  /// Mutable view; the shape cannot change through it.
  Eigen::Ref<Eigen::MatrixXd> at(std::string_view name);

  std::span<const Entry> entries() const { return entries_; }
  std::size_t entry_count() const { return entries_.size(); }
  Eigen::Index total_size() const;

  double flat(Eigen::Index index) const;
  double& flat(Eigen::Index index);
  /// Entry position owning a flat index, and the offset inside it.
  std::pair<std::size_t, Eigen::Index> locate(Eigen::Index index) const;

  ParamTree zeros_like() const;
  bool same_layout(const ParamTree& other) const;
  bool all_finite() const;

  friend bool operator==(const ParamTree& a, const ParamTree& b);

 private:
  std::size_t index_of(std::string_view name) const;
  std::vector<Entry> entries_;
};

}  // namespace brdro
