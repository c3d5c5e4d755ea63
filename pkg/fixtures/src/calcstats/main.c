/* calcstats: integer statistics over argv values.
 * argv[1] is a flags byte (0x80 turns on round-up mean), the rest are the
 * sample. Scaffolding builds at -O2; the target functions build at -O0.
 */
#include <stdio.h>
#include <stdlib.h>
#include "../../defs.h"
#include "calcstats.h"

unsigned char gFlags;
int gBias;

int main(int argc, char **argv)
{
    int vals[64];
    int n = 0;

    if (argc < 3)
        return 2;
    gFlags = (unsigned char)strtoul(argv[1], 0, 0);
    for (int i = 2; i < argc && n < 64; i++)
        vals[n++] = atoi(argv[i]);
    printf("sum=%lld\n", (long long)fn_sum(vals, n));
    printf("mean=%lld bias=%d\n", (long long)fn_mean(vals, n), gBias);
    printf("median=%lld\n", (long long)fn_median(vals, n));
    printf("minmax=%llx\n", (long long)fn_minmax(vals, n));
    return 0;
}
