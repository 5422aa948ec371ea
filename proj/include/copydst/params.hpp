#pragma once

#include <random>
#include <string>
#include <vector>

#include "copydst/mat.hpp"

namespace copydst {

// One named parameter tensor. Gradients live outside the parameter in a
// Grads buffer aligned with the registry, so concurrent backward passes can
// each write their own buffer against read-only weights.
struct Param {
  std::string name;
  int idx = -1;
  Mat w;
};

using Grads = std::vector<Mat>;

class ParamRegistry {
 public:
  Param* add(Param* p, const std::string& name, int rows, int cols) {
    p->name = name;
    p->idx = static_cast<int>(params_.size());
    p->w = Mat(rows, cols);
    params_.push_back(p);
    return p;
  }

  const std::vector<Param*>& all() const { return params_; }

  Grads make_grads() const {
    Grads g;
    g.reserve(params_.size());
    for (const Param* p : params_) g.emplace_back(p->w.rows, p->w.cols);
    return g;
  }

  static void zero(Grads& g) {
    for (auto& m : g) m.zero();
  }

  size_t total_values() const {
    size_t n = 0;
    for (const Param* p : params_) n += p->w.size();
    return n;
  }

 private:
  std::vector<Param*> params_;
};

inline void init_normal(Mat& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : m.a) v = dist(rng);
}

}  // namespace copydst
