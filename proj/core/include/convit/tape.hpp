#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "convit/tensor.hpp"

namespace convit {

// Records one entry per differentiable operation, in execution order.
// backward() re-derives intermediate gradients from scratch on every call
// and accumulates only into leaves, so repeated calls without zero_grad()
// sum leaf gradients. Single-threaded: one tape per training thread.
template <typename S>
class Tape {
 public:
  void record(std::shared_ptr<detail::Node<S>> output, std::function<void()> backward) {
    entries_.push_back(Entry{std::move(output), std::move(backward)});
  }

  // Seeds d(loss)/d(loss) = 1 and replays recorded rules in reverse.
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw ContractError("backward: loss must be a single-element tensor, got shape " +
                          shape_str(loss.shape()));
    for (Entry& e : entries_) e.output->grad.assign(e.output->value.size(), S(0));
    loss.node()->ensure_grad();
    loss.node()->grad[0] += S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<detail::Node<S>> output;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
};

namespace detail {
template <typename S>
Tape<S>*& tape_slot() {
  thread_local Tape<S>* slot = nullptr;
  return slot;
}
}  // namespace detail

template <typename S>
Tape<S>* active_tape() {
  return detail::tape_slot<S>();
}

// RAII activation of a tape on the current thread. Ops record backward rules
// only while a tape is active and some input requires gradients.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : prev_(detail::tape_slot<S>()) {
    detail::tape_slot<S>() = &tape;
  }
  ~TapeScope() { detail::tape_slot<S>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

}  // namespace convit
