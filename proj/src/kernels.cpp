#include "temposteer/kernels.hpp"

namespace temposteer::kernels {

const Ops& avx2_ops();  // defined in kernels_avx2.cpp

namespace {
bool have_avx2() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
}  // namespace

const Ops& active() {
    static const Ops& ops = have_avx2() ? avx2_ops() : scalar_ref();
    return ops;
}

const char* active_name() { return have_avx2() ? "avx2" : "scalar"; }

}  // namespace temposteer::kernels
