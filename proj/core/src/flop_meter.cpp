#include "omniban/flop_meter.hpp"

namespace omniban {

namespace {
thread_local FlopMeter* g_current = nullptr;
}

void FlopMeter::add_madds(std::uint64_t n) {
  if (enabled_) madds_.fetch_add(n, std::memory_order_relaxed);
}

void FlopMeter::add_transcendentals(std::uint64_t n) {
  if (enabled_) transcendentals_.fetch_add(n, std::memory_order_relaxed);
}

void FlopMeter::add_pointwise(std::uint64_t n) {
  if (enabled_) pointwise_.fetch_add(n, std::memory_order_relaxed);
}

void FlopMeter::reset() {
  madds_ = 0;
  transcendentals_ = 0;
  pointwise_ = 0;
}

FlopCount FlopMeter::count() const { return {madds(), transcendentals(), pointwise()}; }

FlopMeter::Scope::Scope(FlopMeter& meter) : previous_(g_current) { g_current = &meter; }

FlopMeter::Scope::~Scope() { g_current = previous_; }

FlopMeter* FlopMeter::current() { return g_current; }

namespace flops {

void madds(std::uint64_t n) {
  if (g_current) g_current->add_madds(n);
}

void transcendentals(std::uint64_t n) {
  if (g_current) g_current->add_transcendentals(n);
}

void pointwise(std::uint64_t n) {
  if (g_current) g_current->add_pointwise(n);
}

}  // namespace flops
}  // namespace omniban
