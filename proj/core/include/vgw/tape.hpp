#pragma once

#include <functional>

#include "vgw/tensor.hpp"

namespace vgw {

/// Reverse-mode tape. One tape per training step, confined to one thread;
/// distinct tapes may live on distinct threads with no shared state.
///
/// Operations append nodes in execution order, so inputs always precede
/// their consumers and one reverse sweep visits every node exactly once.
template <class S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Installs this tape as the recording target for the current thread.
  /// Nests: the previous target is restored on scope exit.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(tl_current) { tl_current = &t; }
    ~Scope() { tl_current = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() { return tl_current; }

  void record(std::shared_ptr<TensorData<S>> out, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(out), std::move(backward)});
  }

  /// Propagates d(loss)/d(everything) back through the recorded graph and
  /// accumulates into the grad buffers of participating tensors. The tape
  /// is cleared afterwards; leaf gradients survive on their tensors.
  void backward(const Tensor<S>& loss) {
    if (!loss.defined() || loss.numel() != 1)
      throw std::runtime_error(
          "Tape::backward: loss must be a scalar tensor" +
          (loss.defined() ? ", got shape " + shape_str(loss.shape()) : std::string(" (undefined)")));
    auto& ld = *loss.node();
    if (ld.grad.empty()) ld.grad.assign(ld.values.size(), S(0));
    ld.grad[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->out->grad.empty()) continue;  // no consumer needed this value
      it->back();
    }
    nodes_.clear();
    ++backward_runs_;
  }

  size_t size() const { return nodes_.size(); }
  /// Number of completed backward sweeps (instrumentation for tests).
  uint64_t backward_runs() const { return backward_runs_; }

 private:
  struct Node {
    std::shared_ptr<TensorData<S>> out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  uint64_t backward_runs_ = 0;
  static thread_local Tape* tl_current;
};

template <class S>
thread_local Tape<S>* Tape<S>::tl_current = nullptr;

namespace detail {

template <class S>
inline void ensure_grad(TensorData<S>& d) {
  if (d.grad.empty()) d.grad.assign(d.values.size(), S(0));
}

/// True when ops executed now should record onto a tape.
template <class S>
inline bool recording(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::current()) return false;
  for (const Tensor<S>* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

/// Marks `out` as a gradient-carrying intermediate and records its node.
template <class S>
inline void record_op(Tensor<S>& out, std::function<void()> back) {
  out.set_requires_grad(true);
  Tape<S>::current()->record(out.node(), std::move(back));
}

}  // namespace detail
}  // namespace vgw
