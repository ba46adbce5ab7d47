#pragma once

// One small instance per graph primitive, shared by the unit tests and the
// acceptance gradient check.

#include "support/finite_diff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace infosep::testing {

struct PrimitiveCase {
  std::string name;
  Index ar, ac, br, bc;  // br == 0: unary
  std::function<Matrix(Index, Index, Rng&)> init_a;
  std::function<Var(Graph&, Var, Var)> build;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  const auto normal = [](Index r, Index c, Rng& rng) { return normal_away_from_zero(r, c, rng, 0.05); };
  const auto pos = [](Index r, Index c, Rng& rng) { return positive(r, c, rng); };
  static const std::vector<Index> perm{2, 0, 3, 1};
  return {
      {"matmul", 4, 3, 3, 5, normal, [](Graph& g, Var a, Var b) { return g.matmul(a, b); }},
      {"add", 4, 3, 4, 3, normal, [](Graph& g, Var a, Var b) { return g.add(a, b); }},
      {"add_row", 4, 3, 1, 3, normal, [](Graph& g, Var a, Var b) { return g.add(a, b); }},
      {"sub", 4, 3, 4, 3, normal, [](Graph& g, Var a, Var b) { return g.sub(a, b); }},
      {"mul", 4, 3, 4, 3, normal, [](Graph& g, Var a, Var b) { return g.mul(a, b); }},
      {"scale", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.scale(a, -1.7); }},
      {"add_scalar", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.add_scalar(a, 0.3); }},
      {"concat_cols", 4, 3, 4, 2, normal, [](Graph& g, Var a, Var b) { return g.concat(a, b, 1); }},
      {"concat_rows", 4, 3, 2, 3, normal, [](Graph& g, Var a, Var b) { return g.concat(a, b, 0); }},
      {"slice_cols", 4, 5, 0, 0, normal, [](Graph& g, Var a, Var) { return g.slice_cols(a, 1, 3); }},
      {"slice_rows", 5, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.slice_rows(a, 2, 2); }},
      {"pad_cols", 4, 2, 0, 0, normal, [](Graph& g, Var a, Var) { return g.pad_cols(a, 5, 1); }},
      {"leaky_relu", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.leaky_relu(a, 0.01); }},
      {"square", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.square(a); }},
      {"sqrt", 4, 3, 0, 0, pos, [](Graph& g, Var a, Var) { return g.sqrt(a); }},
      {"exp", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.exp(a); }},
      {"log", 4, 3, 0, 0, pos, [](Graph& g, Var a, Var) { return g.log(a); }},
      {"sigmoid", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.sigmoid(a); }},
      {"clamp", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.clamp(a, -0.5, 0.6); }},
      {"sum", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.sum(a); }},
      {"mean", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.mean(a); }},
      {"row_l2_norm", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.row_l2_norm(a); }},
      {"row_sum", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.row_sum(a); }},
      {"col_sum", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.col_sum(a); }},
      {"transpose", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.transpose(a); }},
      {"broadcast_rows", 1, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.broadcast_rows(a, 4); }},
      {"broadcast_cols", 4, 1, 0, 0, normal, [](Graph& g, Var a, Var) { return g.broadcast_cols(a, 3); }},
      {"broadcast_scalar", 1, 1, 0, 0, normal, [](Graph& g, Var a, Var) { return g.broadcast_scalar(a, 4, 3); }},
      {"permute_rows", 4, 3, 0, 0, normal, [](Graph& g, Var a, Var) { return g.permute_rows(a, perm); }},
  };
}

}  // namespace infosep::testing
