#include <math.h>
#include <stdio.h>
#include <string.h>
#include "wfvi.h"

#define CHECK(call)                                                      \
    do {                                                                 \
        enum WfviStatus s_ = (call);                                     \
        if (s_ != WFVI_STATUS_OK) {                                      \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,            \
                    wfvi_last_error_message());                          \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    const double nu[2] = {0.5, -1.0};
    const double lambda[4] = {2.0, 0.3, 0.3, 1.0};
    WfviModel *model = NULL;
    CHECK(wfvi_model_gaussian_new(2, nu, lambda, &model));

    WfviFitOptions opts;
    CHECK(wfvi_fit_options_default(WFVI_METHOD_SDB, 9, &opts));
    opts.max_iter = 10000;
    opts.window = 200;
    WfviFit *fit = NULL;
    CHECK(wfvi_fit_run(model, &opts, &fit));

    double mu[2];
    CHECK(wfvi_fit_mean(fit, mu, 2));
    size_t iters = 0;
    CHECK(wfvi_fit_summary(fit, &iters, NULL, NULL, NULL, NULL));

    char *json = NULL;
    CHECK(wfvi_fit_to_json(fit, &json));
    printf("iterations %zu mu %.4f %.4f json %zu bytes\n", iters, mu[0], mu[1], strlen(json));
    wfvi_string_free(json);

    WfviModel *bad = NULL;
    const double not_spd[4] = {1.0, 2.0, 2.0, 1.0};
    if (wfvi_model_gaussian_new(2, nu, not_spd, &bad) != WFVI_STATUS_NOT_POSITIVE_DEFINITE) return 2;

    wfvi_fit_free(fit);
    wfvi_model_free(model);
    return fabs(mu[0] - nu[0]) < 0.05 && fabs(mu[1] - nu[1]) < 0.05 ? 0 : 3;
}
