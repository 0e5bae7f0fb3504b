#include "cgrnn/params.hpp"

#include <stdexcept>

namespace cgrnn {

void ParameterSet::add(Parameter p) {
  if (contains(p.name)) throw std::invalid_argument("ParameterSet: duplicate parameter " + p.name);
  items_.push_back(std::move(p));
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name == name) return i;
  }
  throw std::out_of_range("ParameterSet: no parameter named " + name);
}

const Parameter& ParameterSet::at(const std::string& name) const { return items_[index_of(name)]; }
Parameter& ParameterSet::at(const std::string& name) { return items_[index_of(name)]; }

Index ParameterSet::scalar_count() const {
  Index total = 0;
  for (const auto& p : items_) total += p.scalar_count();
  return total;
}

}  // namespace cgrnn
