#include "/root/pkg/fixtures/defs.h"
#include "/root/pkg/fixtures/src/textproc/textproc.h"
#include "/root/pkg/fixtures/src/textproc/fn_count_words.c"
