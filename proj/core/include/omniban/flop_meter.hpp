#pragma once

#include <atomic>
#include <cstdint>
#include <string_view>

namespace omniban {

/// Snapshot of a FlopMeter.
struct FlopCount {
  std::uint64_t madds = 0;
  std::uint64_t transcendentals = 0;
  std::uint64_t pointwise = 0;

  /// 2 FLOPs per multiply-add, 1 per transcendental or pointwise op.
  std::uint64_t total_flops() const { return 2 * madds + transcendentals + pointwise; }
  friend bool operator==(const FlopCount&, const FlopCount&) = default;
};

/// Counts forward-pass arithmetic. Kernels report to the meter installed on
/// the calling thread via FlopMeter::Scope; with no meter installed counting
/// is a no-op. Backward passes are never counted.
///
/// Convention: one multiply-add = 2 FLOPs; one exp/log/div/sqrt = 1 FLOP;
/// one add/sub/mul/max/compare outside a multiply-add = 1 FLOP. Data movement
/// (reshape, transpose, slicing, concatenation, masking) is free.
class FlopMeter {
 public:
  static constexpr std::string_view kConvention =
      "madd=2 FLOPs; exp/log/div/sqrt=1 FLOP; pointwise add/mul/max=1 FLOP; forward pass only";

  explicit FlopMeter(bool enabled = true) : enabled_(enabled) {}
  FlopMeter(const FlopMeter&) = delete;
  FlopMeter& operator=(const FlopMeter&) = delete;

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }

  void add_madds(std::uint64_t n);
  void add_transcendentals(std::uint64_t n);
  void add_pointwise(std::uint64_t n);
  void reset();

  FlopCount count() const;
  std::uint64_t madds() const { return madds_.load(std::memory_order_relaxed); }
  std::uint64_t transcendentals() const { return transcendentals_.load(std::memory_order_relaxed); }
  std::uint64_t pointwise() const { return pointwise_.load(std::memory_order_relaxed); }
  std::uint64_t total_flops() const { return count().total_flops(); }

  /// Installs a meter as the current one for this thread; restores the
  /// previous meter on destruction.
  class Scope {
   public:
    explicit Scope(FlopMeter& meter);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    FlopMeter* previous_;
  };

  /// Meter installed on this thread, or nullptr.
  static FlopMeter* current();

 private:
  bool enabled_;
  std::atomic<std::uint64_t> madds_{0};
  std::atomic<std::uint64_t> transcendentals_{0};
  std::atomic<std::uint64_t> pointwise_{0};
};

namespace flops {
void madds(std::uint64_t n);
void transcendentals(std::uint64_t n);
void pointwise(std::uint64_t n);
}  // namespace flops

}  // namespace omniban
