#include <stdio.h>
#include <math.h>
#include "hyperspde.h"

#define CHECK(call)                                                   \
    do {                                                              \
        HsStatus s_ = (call);                                         \
        if (s_ != HS_STATUS_OK) {                                     \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, hs_last_error()); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    HsModel *model = NULL;
    HsPaths *paths = NULL;
    double est[2], z[2], params[2];

    if (hs_model_preset("no_such_preset", &model) != HS_STATUS_INVALID_MODEL || hs_last_error() == NULL)
        return 2;
    CHECK(hs_model_preset("plate_structural", &model));
    if (hs_model_dim(model) != 2)
        return 3;
    CHECK(hs_model_parameters(model, params, 2));
    CHECK(hs_simulate(model, 128, 2000, HS_INTEGRATOR_EXACT, 7, 0, &paths));
    CHECK(hs_estimate(model, paths, 0.1, 4, est, z, 2));
    if (!isfinite(est[0]) || !isfinite(est[1]))
        return 4;
    if (hs_estimate(model, paths, 0.1, 40, est, z, 2) != HS_STATUS_PLACEMENT)
        return 5;
    printf("version %s theta %.4f eta %.4f C(0,2) %.1f\n", hs_version(), est[0], est[1], hs_c_constant(0.0, 2.0));
    hs_paths_free(paths);
    hs_model_free(model);
    return 0;
}
