// HLS compatibility shim for generated designs.
//
// Under Vitis HLS (__SYNTHESIS__ or __VITIS_HLS__) the vendor headers are
// used unchanged. Under a plain C++ compiler the `#pragma HLS` directives are
// inert and ap_fixed<W, I> is emulated with the vendor defaults: truncation
// toward minus infinity (AP_TRN) and two's-complement wrap (AP_WRAP).
//
// Interface mapping used by generated top functions: every array port is an
// AXI4 memory-mapped master (m_axi) in its own bundle with offset=slave, and
// the block-level control protocol is s_axilite on port=return.
#ifndef FORGEBENCH_HLS_SHIM_H
#define FORGEBENCH_HLS_SHIM_H

#include <cmath>
#include <stdint.h>

#if defined(__SYNTHESIS__) || defined(__VITIS_HLS__)
#include <ap_fixed.h>
#else
#if defined(__GNUC__)
#pragma GCC diagnostic ignored "-Wunknown-pragmas"
#endif

template <int W, int I>
class ap_fixed {
public:
    ap_fixed() : raw_(0) {}
    ap_fixed(double v) : raw_(quantize(v)) {}
    operator double() const { return std::ldexp((double)raw_, -(W - I)); }

private:
    static long long quantize(double v) {
        const double modulus = std::ldexp(1.0, W);
        double q = std::fmod(std::floor(std::ldexp(v, W - I)), modulus);
        if (q < 0) q += modulus;
        if (q >= modulus / 2) q -= modulus;
        return (long long)q;
    }
    long long raw_;
};
#endif

#endif
