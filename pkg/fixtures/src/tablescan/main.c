/* tablescan: a fixed-capacity key/value table built from k:v argv pairs. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "../../defs.h"
#include "tablescan.h"

void tab_panic(void)
{
    fprintf(stderr, "table full\n");
    exit(4);
}

int main(int argc, char **argv)
{
    struct table t;

    memset(&t, 0, sizeof t);
    for (int i = 1; i < argc; i++) {
        char *colon = strchr(argv[i], ':');
        if (!colon)
            continue;
        *colon = 0;
        fn_insert(&t, atoi(argv[i]), atoi(colon + 1));
    }
    printf("count=%d\n", t.count);
    printf("get7=%lld\n", (long long)fn_lookup(&t, 7));
    printf("get1=%lld\n", (long long)fn_lookup(&t, 1));
    printf("max=%lld\n", (long long)fn_scan_max(&t));
    printf("min=%lld\n", (long long)fn_find_min(&t));
    return 0;
}
