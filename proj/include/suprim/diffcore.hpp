#pragma once

// Reverse-mode differentiation over dense row-major double matrices.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace suprim::dc {

// Every buffer starts on a cache line so vectorized reductions take the same
// path on every run (summation order depends on alignment).
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Array2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Buffer data;

  Array2() = default;
  Array2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Array2(std::size_t r, std::size_t c, std::span<const double> values);

  static Array2 row(std::span<const double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Array2& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  friend bool operator==(const Array2&, const Array2&) = default;
};

using ParamId = std::size_t;

/// Named parameters with matching gradient buffers, in insertion order.
class ParamStore {
 public:
  ParamId add(const std::string& name, Array2 init);
  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Array2& value(ParamId id) { return values_[id]; }
  const Array2& value(ParamId id) const { return values_[id]; }
  Array2& grad(ParamId id) { return grads_[id]; }
  const Array2& grad(ParamId id) const { return grads_[id]; }

  void zero_grad();
  std::size_t scalar_count() const;
  bool same_layout(const ParamStore& other) const;
  bool grads_finite() const;
  bool values_finite() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Array2> values_;
  std::vector<Array2> grads_;
  std::map<std::string, ParamId> index_;
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

enum class Reduction : std::uint8_t { Mean, Sum };

inline constexpr double kProbClamp = 1e-7;

/// Records operations for one backward pass. With record == false the tape
/// only computes values (no closures, no gradient buffers).
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array2 value);
  Var param(ParamStore& store, ParamId id);

  const Array2& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() seed with respect to v (zeros if v was unreachable).
  const Array2& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  Var matmul(Var a, Var b);     // a (r x k) . b (k x c)
  Var matmul_nt(Var a, Var b);  // a (r x k) . b^T, b (c x k)
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var add_bias(Var a, Var bias);  // bias 1 x c broadcast over rows
  Var scale(Var a, double s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var transpose(Var a);
  Var gather_rows(Var a, const std::vector<std::size_t>& rows);
  Var mean(Var a);  // 1 x 1
  Var sum(Var a);   // 1 x 1
  /// Multi-head scaled dot-product attention. q (n x d), k and v (m x d); d % heads == 0.
  Var attention(Var q, Var k, Var v, std::size_t heads);
  /// Binary cross-entropy on probabilities clamped to [kProbClamp, 1 - kProbClamp].
  Var bce(Var pred, Var target, Reduction r = Reduction::Mean);
  /// Sum over rows of -sum_j target_ij * log softmax(logits_i)_j.
  Var cross_entropy(Var logits, Var target);

  /// Seeds d(out)/d(out) = 1 (out must be 1 x 1) and accumulates into
  /// parameter gradients. Throws NonFiniteDetected on non-finite gradients.
  void backward(Var out);

 private:
  struct Node {
    Array2 value;
    Array2 grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Array2 value, bool requires_grad);
  Array2& g(std::size_t id);  // allocates lazily
  bool any_grad(std::initializer_list<Var> vs) const;

  bool record_;
  std::vector<Node> nodes_;
};

struct AdamState {
  double lr = 7.5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Array2> m;
  std::vector<Array2> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

AdamState make_adam(const ParamStore& params, double lr);

/// Bias-corrected Adam update using the store's gradients. Throws ShapeMismatch.
void adam_step(ParamStore& params, AdamState& state);

/// teacher <- m * teacher + (1 - m) * student. Throws StoreMismatch.
void ema_update(ParamStore& teacher, const ParamStore& student, double m);

}  // namespace suprim::dc
