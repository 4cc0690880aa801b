#pragma once

// Differentiable primitives over Tape variables.
//
// Batched quantities are (batch, features) matrices; a rank-1 input to
// `linear` is treated as a single row and yields a rank-1 result. Per-sample
// scalars are (batch, 1) columns. No broadcasting beyond what each op states.

#include <span>
#include <vector>

#include "shppo/tape.hpp"

namespace shppo::ops {

/// y = x W^T + b. x: (batch, in) or (in); W: (out, in); b: (out).
Var linear(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a + c with c held constant.
Var add_constant(Var a, const Tensor& c);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t len);

/// Sum / mean over all elements; result has shape (1).
Var sum(Var a);
Var mean(Var a);

/// Per-row linear map with row-specific weights:
/// y(r,:) = reshape(w(r,:), m, n) * x(r,:) + b(r,:), with m = b.cols, n = x.cols.
Var hete_linear(Var w, Var x, Var b);

/// Row-wise log-softmax.
Var log_softmax(Var logits);

/// out(r, 0) = a(r, index[r]).
Var gather_cols(Var a, std::span<const int> index);

/// Lays rows of x (R, L) out as a (slots / per_row, per_row * L) matrix.
/// slot s takes row source[s] of x, or zeros when source[s] < 0.
Var scatter_rows(Var x, std::span<const long> source, std::size_t per_row);

}  // namespace shppo::ops
