#include <stdio.h>
#include <string.h>
#include "cbctseg.h"

#define CHECK(x) do { if ((x) != CBCT_STATUS_OK) { \
    fprintf(stderr, "%s failed: %s\n", #x, cbct_last_error_message()); return 1; } } while (0)

int main(int argc, char **argv) {
    uint32_t p[27] = {0}, g[27] = {0};
    for (int i = 0; i < 9; i++) { p[i] = 3; g[i] = 3; }
    p[26] = 3; /* one stray voxel in the far corner */
    CbctVolume *pv = NULL, *gv = NULL, *post = NULL, *back = NULL;
    CHECK(cbct_volume_new(3, 3, 3, 0.3, 0.3, 0.3, p, &pv));
    CHECK(cbct_volume_new(3, 3, 3, 0.3, 0.3, 0.3, g, &gv));
    double d = 0, h = 0;
    CHECK(cbct_dice(pv, gv, 3, &d));
    CHECK(cbct_hd95(pv, gv, 3, 0.0, &h));
    CbctCutoffTable *t = NULL;
    CHECK(cbct_cutoffs_from_json("{\"mode\":\"per_component\",\"classes\":{\"3\":{\"cutoff\":2,\"cutoff_dice\":2,\"cutoff_hd95\":2}}}", &t));
    CHECK(cbct_apply_cutoffs(pv, t, &post));
    double d2 = 0;
    CHECK(cbct_dice(post, gv, 3, &d2));
    CHECK(cbct_volume_write(post, argv[1]));
    CHECK(cbct_volume_read(argv[1], &back));
    size_t dims[3], n = 0;
    CHECK(cbct_volume_shape(back, dims, NULL));
    const uint32_t *data = cbct_volume_data(back, &n);
    if (n != 27 || data[26] != 0 || data[0] != 3) { fprintf(stderr, "bad roundtrip\n"); return 1; }
    if (cbct_volume_new(3, 3, 3, -1.0, 1.0, 1.0, p, &pv) != CBCT_STATUS_INVALID_ARGUMENT) return 1;
    if (cbct_last_error_message() == NULL) return 1;
    CbctPlan *plan = NULL;
    char *json = NULL;
    CHECK(cbct_plan_new(160, 320, 320, &plan));
    CHECK(cbct_plan_to_json(plan, &json));
    printf("dice=%.6f hd95=%.6f dice_after=%.6f stages=%zu dims=%zux%zux%zu json=%d\n",
           d, h, d2, cbct_plan_n_stages(plan), dims[0], dims[1], dims[2], strstr(json, "\"n_stages\": 7") != NULL);
    cbct_string_free(json);
    cbct_plan_free(plan);
    cbct_cutoffs_free(t);
    cbct_volume_free(pv); cbct_volume_free(gv); cbct_volume_free(post); cbct_volume_free(back);
    return 0;
}
