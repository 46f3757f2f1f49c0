#include <math.h>
#include <stdio.h>
#include "bergman.h"

int main(void) {
    const uint16_t exps[2] = {1, 1};
    const BergmanComplex coeff = {0.5, 0.0};
    BergmanWeight *w = NULL;
    if (bergman_weight_new(1, 8, exps, &coeff, 1, NULL, 2.0, &w) != BERGMAN_STATUS_OK) {
        fprintf(stderr, "weight: %s\n", bergman_last_error_message());
        return 1;
    }
    BergmanAmplitude *a = NULL;
    if (bergman_amplitude_solve(w, 2, 0.5, &a) != BERGMAN_STATUS_OK) return 2;
    BergmanKernel *k = NULL;
    if (bergman_kernel_new(w, a, 0.1, &k) != BERGMAN_STATUS_OK) return 3;
    BergmanComplex x = {0.3, 0.1}, y = {-0.2, 0.2}, v;
    if (bergman_kernel_eval(k, &x, &y, &v) != BERGMAN_STATUS_OK) return 4;
    /* exact: exp(x conj(y) / h) / (pi h) */
    double re = x.re * y.re + x.im * y.im, im = x.im * y.re - x.re * y.im;
    double m = exp(re / 0.1) / (M_PI * 0.1);
    double er = m * cos(im / 0.1), ei = m * sin(im / 0.1);
    double err = hypot(v.re - er, v.im - ei) / hypot(er, ei);
    bergman_kernel_free(k);
    bergman_amplitude_free(a);
    bergman_weight_free(w);
    if (bergman_kernel_eval(NULL, &x, &y, &v) != BERGMAN_STATUS_NULL_POINTER) return 5;
    printf("%.3e\n", err);
    return err < 1e-12 ? 0 : 6;
}
