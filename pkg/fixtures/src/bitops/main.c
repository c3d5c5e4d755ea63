/* bitops: small bit-twiddling demos over one word; argv[1] sets the clamp limit. */
#include <stdio.h>
#include <stdlib.h>
#include "../../defs.h"
#include "bitops.h"

unsigned __int8 gLim;

int main(int argc, char **argv)
{
    if (argc < 3) {
        fprintf(stderr, "usage: %s LIM WORD [WORD...]\n", argv[0]);
        return 2;
    }
    gLim = (unsigned char)strtoul(argv[1], 0, 0);
    for (int i = 2; i < argc; i++) {
        unsigned int w = (unsigned int)strtoul(argv[i], 0, 0);
        printf("pop=%lld parity=%lld rotl5=%lld clamp=%lld pack=%lld\n",
               (long long)fn_popcnt(w),
               (long long)fn_parity(w),
               (long long)fn_rotl(w, 5),
               (long long)fn_clamp((int)w),
               (long long)fn_pack((int)w, (int)w >> 3));
    }
    return 0;
}
