#include "/root/pkg/fixtures/defs.h"
#include "/root/pkg/fixtures/src/checksum/checksum.h"
#include "/root/pkg/fixtures/src/checksum/fn_adler.c"
