#pragma once

#include <string>
#include <vector>

#include "cgrnn/ctensor.hpp"

namespace cgrnn {

enum class Constraint { none, stiefel };

/// One trainable block. Real blocks keep a zero imaginary channel that is
/// never bound, updated or counted.
struct Parameter {
  std::string name;
  ComplexMatrix value;
  bool is_complex = true;
  Constraint constraint = Constraint::none;

  Index scalar_count() const { return value.rows() * value.cols() * (is_complex ? 2 : 1); }
};

class ParameterSet {
 public:
  void add(Parameter p);
  bool contains(const std::string& name) const;
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  std::size_t index_of(const std::string& name) const;

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  /// Total trainable real scalars.
  Index scalar_count() const;

 private:
  std::vector<Parameter> items_;
};

}  // namespace cgrnn
