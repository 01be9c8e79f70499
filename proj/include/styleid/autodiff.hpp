#pragma once

// Reverse-mode differentiation over a Wengert list.
//
// A Var pairs a tensor value with its position on a Tape. Vars without a
// tape are constants: the taped ops below accept them and simply skip
// recording, so the same model code runs for training (with a tape) and
// inference (without one). When no operand is tracked the result is the
// bit-identical output of the value kernel.

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "styleid/ops.hpp"

namespace styleid::ad {

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tensor<Scalar> value;
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  bool tracked() const { return tape != nullptr; }
  const Shape& shape() const { return value.shape(); }
};

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  return Var<Scalar>{std::move(value)};
}

/// Gradients of a scalar loss with respect to every leaf of a tape.
template <typename Scalar>
class Gradients {
 public:
  Gradients(const Tape<Scalar>* tape, std::unordered_map<int, Tensor<Scalar>> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  const Tensor<Scalar>& of(const Var<Scalar>& v) const {
    if (v.tape != tape_ || v.id < 0) {
      throw MissingGradientError("gradient requested for a value that is not on this tape");
    }
    auto it = grads_.find(v.id);
    if (it == grads_.end()) {
      throw MissingGradientError("gradient requested for an intermediate value, not a leaf");
    }
    return it->second;
  }

  std::size_t size() const { return grads_.size(); }

 private:
  const Tape<Scalar>* tape_;
  std::unordered_map<int, Tensor<Scalar>> grads_;
};

template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<Scalar>& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a differentiable input (a parameter or an input we want d/dx for).
  Var<Scalar> leaf(Tensor<Scalar> value) {
    nodes_.push_back({value.shape(), nullptr, true});
    return Var<Scalar>{std::move(value), this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> record(Tensor<Scalar> value, BackwardFn backward) {
    nodes_.push_back({value.shape(), std::move(backward), false});
    return Var<Scalar>{std::move(value), this, static_cast<int>(nodes_.size()) - 1};
  }

  bool needs(int id) const { return id >= 0; }

  void accumulate(int id, const Tensor<Scalar>& grad) {
    if (id < 0) return;
    auto& slot = grads_[static_cast<std::size_t>(id)];
    if (grad.shape() != nodes_[static_cast<std::size_t>(id)].shape) {
      throw ShapeError("backward: gradient shape " + shape_string(grad.shape()) + " for node of shape " +
                       shape_string(nodes_[static_cast<std::size_t>(id)].shape));
    }
    if (slot.size() == 0) {
      slot = grad.vec();
    } else {
      slot += grad.vec();
    }
  }

  /// Runs the reverse sweep from a scalar loss. The tape can be reused for
  /// another backward call but is normally discarded after one step.
  Gradients<Scalar> backward(const Var<Scalar>& loss) {
    if (loss.tape != this) throw MissingGradientError("backward: loss is not recorded on this tape");
    if (loss.value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    grads_.assign(nodes_.size(), Vector<Scalar>());
    grads_[static_cast<std::size_t>(loss.id)] = Vector<Scalar>::Ones(1);
    for (int id = loss.id; id >= 0; --id) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      auto& g = grads_[static_cast<std::size_t>(id)];
      if (node.is_leaf || g.size() == 0) continue;
      Tensor<Scalar> grad_out(node.shape, std::move(g));
      g = Vector<Scalar>();
      node.backward(grad_out, *this);
    }
    std::unordered_map<int, Tensor<Scalar>> out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      if (!nodes_[id].is_leaf) continue;
      auto& g = grads_[id];
      out.emplace(static_cast<int>(id), g.size() ? Tensor<Scalar>(nodes_[id].shape, std::move(g))
                                                 : Tensor<Scalar>::zeros(nodes_[id].shape));
    }
    grads_.clear();
    return Gradients<Scalar>(this, std::move(out));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    BackwardFn backward;
    bool is_leaf;
  };
  std::vector<Node> nodes_;
  std::vector<Vector<Scalar>> grads_;
};

namespace detail {

template <typename Scalar>
Tape<Scalar>* common_tape(std::initializer_list<const Var<Scalar>*> vars) {
  Tape<Scalar>* tape = nullptr;
  for (const auto* v : vars) {
    if (!v->tape) continue;
    if (tape && tape != v->tape) throw std::logic_error("autodiff: operands recorded on different tapes");
    tape = v->tape;
  }
  return tape;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = styleid::matmul(a.value, b.value);
  auto* tape = detail::common_tape({&a, &b});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [av = a.value, bv = b.value, ia = a.id, ib = b.id](
                                          const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (t.needs(ia)) t.accumulate(ia, styleid::matmul(g, styleid::transpose(bv)));
    if (t.needs(ib)) t.accumulate(ib, styleid::matmul(styleid::transpose(av), g));
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  auto out = styleid::transpose(a.value);
  if (!a.tracked()) return {std::move(out)};
  return a.tape->record(std::move(out), [ia = a.id](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ia, styleid::transpose(g));
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
  auto out = a.value.reshaped(std::move(shape));
  if (!a.tracked()) return {std::move(out)};
  return a.tape->record(std::move(out), [ia = a.id, from = a.value.shape()](const Tensor<Scalar>& g,
                                                                           Tape<Scalar>& t) {
    t.accumulate(ia, g.reshaped(from));
  });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x) {
  auto out = styleid::softmax_rows(x.value);
  if (!x.tracked()) return {std::move(out)};
  return x.tape->record(out, [y = out, ix = x.id](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ix, styleid::softmax_rows_backward(y, g));
  });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, int stride, int pad) {
  auto out = styleid::conv2d(x.value, w.value, stride, pad);
  auto* tape = detail::common_tape({&x, &w});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [xv = x.value, wv = w.value, ix = x.id, iw = w.id, stride, pad](
                                          const Tensor<Scalar>& g, Tape<Scalar>& t) {
    auto grads = styleid::conv2d_backward(xv, wv, g, stride, pad);
    t.accumulate(ix, grads.input);
    t.accumulate(iw, grads.weight);
  });
}

template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, int groups, const Var<Scalar>& gamma,
                       const Var<Scalar>& beta, double eps) {
  auto out = styleid::group_norm(x.value, groups, gamma.value, beta.value, eps);
  auto* tape = detail::common_tape({&x, &gamma, &beta});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out),
                      [xv = x.value, gv = gamma.value, ix = x.id, ig = gamma.id, ib = beta.id, groups,
                       eps](const Tensor<Scalar>& g, Tape<Scalar>& t) {
                        auto grads = styleid::group_norm_backward(xv, groups, gv, eps, g);
                        t.accumulate(ix, grads.input);
                        t.accumulate(ig, grads.scale);
                        t.accumulate(ib, grads.shift);
                      });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  auto out = styleid::linear(x.value, w.value, b.value);
  auto* tape = detail::common_tape({&x, &w, &b});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [xv = x.value, wv = w.value, ix = x.id, iw = w.id, ib = b.id](
                                          const Tensor<Scalar>& g, Tape<Scalar>& t) {
    const Eigen::Index rows = xv.rank() == 1 ? 1 : xv.dim(0);
    auto gm = g.matrix(rows, wv.dim(0));
    auto xm = xv.matrix(rows, wv.dim(1));
    if (t.needs(ix)) {
      RowMatrix<Scalar> gx = gm * wv.matrix();
      t.accumulate(ix, Tensor<Scalar>(xv.shape(), gx));
    }
    if (t.needs(iw)) {
      RowMatrix<Scalar> gw = gm.transpose() * xm;
      t.accumulate(iw, Tensor<Scalar>(wv.shape(), gw));
    }
    if (t.needs(ib)) {
      Vector<Scalar> gb = gm.colwise().sum().transpose();
      t.accumulate(ib, Tensor<Scalar>({wv.dim(0)}, std::move(gb)));
    }
  });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& x) {
  auto out = styleid::silu(x.value);
  if (!x.tracked()) return {std::move(out)};
  return x.tape->record(std::move(out), [xv = x.value, ix = x.id](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ix, styleid::silu_backward(xv, g));
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& x) {
  auto out = styleid::upsample_nearest2x(x.value);
  if (!x.tracked()) return {std::move(out)};
  return x.tape->record(std::move(out), [ix = x.id](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ix, styleid::upsample_nearest2x_backward(g));
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = styleid::add(a.value, b.value);
  auto* tape = detail::common_tape({&a, &b});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [ia = a.id, ib = b.id](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = styleid::mul(a.value, b.value);
  auto* tape = detail::common_tape({&a, &b});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [av = a.value, bv = b.value, ia = a.id, ib = b.id](
                                          const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (t.needs(ia)) t.accumulate(ia, styleid::mul(g, bv));
    if (t.needs(ib)) t.accumulate(ib, styleid::mul(g, av));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  auto out = styleid::scale(a.value, factor);
  if (!a.tracked()) return {std::move(out)};
  return a.tape->record(std::move(out), [ia = a.id, factor](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ia, styleid::scale(g, factor));
  });
}

template <typename Scalar>
Var<Scalar> add_channel(const Var<Scalar>& x, const Var<Scalar>& bias) {
  auto out = styleid::add_channel(x.value, bias.value);
  auto* tape = detail::common_tape({&x, &bias});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [ix = x.id, ib = bias.id](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ix, g);
    if (t.needs(ib)) t.accumulate(ib, styleid::sum_spatial(g));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto out = styleid::sum(x.value);
  if (!x.tracked()) return {std::move(out)};
  return x.tape->record(std::move(out), [ix = x.id, shape = x.value.shape()](const Tensor<Scalar>& g,
                                                                            Tape<Scalar>& t) {
    t.accumulate(ix, Tensor<Scalar>::constant(shape, g.item()));
  });
}

template <typename Scalar>
Var<Scalar> mean_squared_error(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = styleid::mean_squared_error(a.value, b.value);
  auto* tape = detail::common_tape({&a, &b});
  if (!tape) return {std::move(out)};
  return tape->record(std::move(out), [av = a.value, bv = b.value, ia = a.id, ib = b.id](
                                          const Tensor<Scalar>& g, Tape<Scalar>& t) {
    const Scalar k = g.item() * Scalar(2) / static_cast<Scalar>(av.size());
    auto diff = styleid::scale(styleid::sub(av, bv), k);
    if (t.needs(ia)) t.accumulate(ia, diff);
    if (t.needs(ib)) t.accumulate(ib, styleid::scale(diff, Scalar(-1)));
  });
}

}  // namespace styleid::ad
