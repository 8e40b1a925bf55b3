#pragma once

#include <cstdint>
#include <string>

// Data-parallel inner loops used by the tensor engine. Every kernel exists as
// a scalar reference implementation; hot ones also have an AVX2 variant that
// keeps the exact accumulation order of the reference (vector lanes run across
// independent outputs, mul and add stay separate ops), so both variants
// produce bit-identical results and are equivalence-tested as such.
namespace ctvit::kernels {

struct KernelTable {
    // c[m x n] += a[m x k] * b[k x n], row-major. Caller zeroes c first.
    void (*matmul)(const double* a, const double* b, double* c,
                   int64_t m, int64_t k, int64_t n);
    // out[i] = a[i] + b[i]
    void (*add)(const double* a, const double* b, double* out, int64_t n);
    // out[i] = a[i] * b[i]
    void (*mul)(const double* a, const double* b, double* out, int64_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, int64_t n);
    // out[i] = alpha * x[i]
    void (*scale)(double alpha, const double* x, double* out, int64_t n);
    // Bias-corrected Adam update on one parameter buffer.
    // m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    // p <- p - lr * (m/bc1) / (sqrt(v/bc2) + eps)
    void (*adam_update)(double* p, double* m, double* v, const double* g,
                        int64_t n, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2);
    const char* name;
};

namespace scalar {
void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n);
void add(const double* a, const double* b, double* out, int64_t n);
void mul(const double* a, const double* b, double* out, int64_t n);
void axpy(double alpha, const double* x, double* y, int64_t n);
void scale(double alpha, const double* x, double* out, int64_t n);
void adam_update(double* p, double* m, double* v, const double* g, int64_t n,
                 double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CTVIT_HAVE_AVX2_BUILD 1
namespace avx2 {
void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n);
void add(const double* a, const double* b, double* out, int64_t n);
void mul(const double* a, const double* b, double* out, int64_t n);
void axpy(double alpha, const double* x, double* y, int64_t n);
void scale(double alpha, const double* x, double* out, int64_t n);
void adam_update(double* p, double* m, double* v, const double* g, int64_t n,
                 double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2);
}  // namespace avx2
#endif

const KernelTable& scalar_table();
#ifdef CTVIT_HAVE_AVX2_BUILD
const KernelTable& avx2_table();
#endif

bool cpu_has_avx2();

// Active table: AVX2 when the CPU supports it, scalar otherwise. The
// CTVIT_KERNELS environment variable ("scalar" or "avx2") overrides.
const KernelTable& active();

// Force a backend by name; throws ConfigError for unknown/unsupported names.
void select(const std::string& name);

}  // namespace ctvit::kernels
