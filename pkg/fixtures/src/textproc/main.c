/* textproc: quoting, trimming and word counting over argv[1].
 * '!' bytes in the input are rewritten to 0x80 so tests can smuggle a
 * high-bit byte through the shell.
 */
#include <stdio.h>
#include <string.h>
#include "../../defs.h"
#include "textproc.h"

static void put_escaped(const char *s)
{
    for (; *s; s++) {
        unsigned char c = (unsigned char)*s;
        if (c < 32 || c > 126)
            printf("\\x%02x", c);
        else
            putchar(c);
    }
    putchar('\n');
}

int main(int argc, char **argv)
{
    char buf[256];
    char out[600];

    if (argc < 2)
        return 2;
    strncpy(buf, argv[1], sizeof buf - 1);
    buf[sizeof buf - 1] = 0;
    for (char *p = buf; *p; p++)
        if (*p == '!')
            *p = (char)0x80;
    printf("words=%lld\n", (long long)fn_count_words(buf));
    printf("quoted=%lld\n", (long long)fn_quote(buf, out));
    printf("out=");
    put_escaped(out);
    long long t = fn_trim(buf);
    printf("trim=%lld ", t);
    put_escaped(buf);
    return 0;
}
