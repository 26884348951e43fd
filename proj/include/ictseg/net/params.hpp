#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "ictseg/errors.hpp"

namespace ictseg {

template <typename T>
struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;

  std::size_t count() const { return values.size(); }
};

// Named, ordered flat collection of dense parameter arrays. Entry order is
// fixed at construction; two sets built from the same architecture are
// congruent (same names, shapes, order).
template <typename T>
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<int> shape) {
    if (by_name_.count(name)) throw ValueError("ParamSet: duplicate entry '" + name + "'");
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 1) throw ShapeError("ParamSet: bad dimension in '" + name + "'");
      n *= static_cast<std::size_t>(d);
    }
    by_name_.emplace(name, entries_.size());
    entries_.push_back(ParamEntry<T>{std::move(name), std::move(shape),
                                     std::vector<T>(n, T(0))});
    return entries_.size() - 1;
  }

  std::size_t entry_count() const { return entries_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.count();
    return n;
  }

  ParamEntry<T>& entry(std::size_t i) { return entries_[i]; }
  const ParamEntry<T>& entry(std::size_t i) const { return entries_[i]; }

  ParamEntry<T>& at(const std::string& name) { return entries_[index_of(name)]; }
  const ParamEntry<T>& at(const std::string& name) const { return entries_[index_of(name)]; }

  std::size_t index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ValueError("ParamSet: no entry '" + name + "'");
    return it->second;
  }

  bool congruent(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name ||
          entries_[i].shape != other.entries_[i].shape)
        return false;
    }
    return true;
  }

  void require_congruent(const ParamSet& other, const char* what) const {
    if (!congruent(other)) throw ShapeError(std::string(what) + ": parameter sets not congruent");
  }

  void fill(T v) {
    for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), v);
  }

  bool operator==(const ParamSet& other) const {
    if (!congruent(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].values != other.entries_[i].values) return false;
    return true;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) {
      const std::size_t i = out.add(e.name, e.shape);
      auto& dst = out.entry(i).values;
      for (std::size_t j = 0; j < e.values.size(); ++j) dst[j] = static_cast<U>(e.values[j]);
    }
    return out;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// dst += scale * src, elementwise over congruent sets.
template <typename T>
void axpy(ParamSet<T>& dst, const ParamSet<T>& src, T scale) {
  dst.require_congruent(src, "axpy");
  for (std::size_t i = 0; i < dst.entry_count(); ++i) {
    auto& d = dst.entry(i).values;
    const auto& s = src.entry(i).values;
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += scale * s[j];
  }
}

// Student parameters theta and their exponential moving average theta'.
// The teacher is only ever written by ema_update, never by gradients.
template <typename T>
struct StudentTeacher {
  ParamSet<T> student;
  ParamSet<T> teacher;
  double lambda_ema = 0.99;
};

template <typename T>
StudentTeacher<T> make_student_teacher(const ParamSet<T>& init, double lambda_ema) {
  if (lambda_ema < 0.0 || lambda_ema > 1.0)
    throw ValueError("lambda_ema must lie in [0,1]");
  return StudentTeacher<T>{init, init, lambda_ema};
}

// theta' <- (1-lambda)*theta + lambda*theta', elementwise; student untouched.
template <typename T>
void ema_update(StudentTeacher<T>& pair) {
  pair.student.require_congruent(pair.teacher, "ema_update");
  const T lam = static_cast<T>(pair.lambda_ema);
  const T one_minus = static_cast<T>(1.0) - lam;
  for (std::size_t i = 0; i < pair.teacher.entry_count(); ++i) {
    auto& t = pair.teacher.entry(i).values;
    const auto& s = pair.student.entry(i).values;
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = one_minus * s[j] + lam * t[j];
  }
}

}  // namespace ictseg
