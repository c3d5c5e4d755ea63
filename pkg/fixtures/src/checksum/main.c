/* checksum: rolling checksums over argv[1] bytes.
 * argv[2] optionally overrides the CRC polynomial (0 trips the panic path).
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "../../defs.h"
#include "checksum.h"

unsigned int gPoly = 0xEDB88320u;
unsigned int gSeed = 0x5A5A5A5Au;

void crc_panic(void)
{
    fprintf(stderr, "bad poly\n");
    exit(3);
}

int main(int argc, char **argv)
{
    if (argc < 2)
        return 2;
    if (argc > 2)
        gPoly = (unsigned int)strtoul(argv[2], 0, 0);
    unsigned char *data = (unsigned char *)argv[1];
    int n = (int)strlen(argv[1]);
    printf("adler=%llx\n", (long long)fn_adler(data, n));
    unsigned int crc = 0xFFFFFFFFu;
    for (int i = 0; i < n; i++)
        crc = (unsigned int)fn_crc_step(crc, data[i]);
    printf("crc=%x\n", crc ^ 0xFFFFFFFFu);
    printf("mix=%llx\n", (long long)fn_mix(data, n));
    return 0;
}
