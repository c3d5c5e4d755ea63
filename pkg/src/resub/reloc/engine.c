/*
 * resub relocation engine.
 *
 * Preloaded into the host process (LD_PRELOAD). Its constructor runs before
 * the host's main(): it loads the substitute module, resolves load bases
 * from /proc/self/maps, back-patches the module's GOT from the mapping
 * table, overwrites the target function's entry with a trampoline that
 * jumps through a fixed pointer cell, and only then optionally pauses for
 * a debugger. The barrier must come last: a debugger attached earlier
 * would plant its entry breakpoint under the not-yet-written trampoline
 * and both would corrupt each other's saved bytes.
 *
 * Environment:
 *   RESUB_MAPPING    colon-separated mapping-table JSON paths (required)
 *   RESUB_MODULE     path of the substitute shared module (required)
 *   RESUB_CELL_ADDR  hex address of the pointer-cell page (default 0xbabe0000)
 *   RESUB_DEBUG_WAIT write pid + pause until SIGUSR1 once the hook is live
 *   RESUB_PIDFILE    where to write the pid for the barrier
 *   BINARY_NAME      only act when the running executable has this basename
 *   FUNCTION_NAME    only hook this target (default: every table target)
 */
#define _GNU_SOURCE
#include <dlfcn.h>
#include <link.h>
#include <errno.h>
#include <fcntl.h>
#include <signal.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/mman.h>
#include <time.h>
#include <unistd.h>

#define MAX_ENTRIES 256
#define MAX_TABLES 64
#define TRAMP_LEN 16
#define DEFAULT_CELL 0xbabe0000UL

struct entry {
    char name[128];
    char kind[32];
    uint64_t bin_offset;
    uint64_t lib_offset;
};

static char g_buf[1 << 16];

static void elog(const char *msg) {
    ssize_t r;
    r = write(2, "[resub-engine] ", 15);
    r = write(2, msg, strlen(msg));
    r = write(2, "\n", 1);
    (void)r;
}

/* A requested substitution that cannot be installed must never pass itself
 * off as the original binary's behavior. */
#define DIE_EXIT_CODE 112
static void die(const char *msg) {
    elog(msg);
    _exit(DIE_EXIT_CODE);
}

static uintptr_t base_of_path(const char *path) {
    /* lowest start address of any mapping of the named file */
    FILE *f = fopen("/proc/self/maps", "r");
    char line[1024];
    uintptr_t best = 0;
    if (!f)
        return 0;
    while (fgets(line, sizeof line, f)) {
        char *nl = strchr(line, '\n');
        if (nl)
            *nl = 0;
        char *p = strchr(line, '/');
        if (!p || strcmp(p, path) != 0)
            continue;
        uintptr_t start = strtoull(line, NULL, 16);
        if (!best || start < best)
            best = start;
    }
    fclose(f);
    return best;
}

/* --- minimal scanner for the mapping-table JSON we emit ------------------ */

static const char *find_key(const char *p, const char *key) {
    char pat[64];
    snprintf(pat, sizeof pat, "\"%s\"", key);
    const char *q = strstr(p, pat);
    if (!q)
        return NULL;
    q = strchr(q + strlen(pat), ':');
    return q ? q + 1 : NULL;
}

static int read_string(const char *p, char *out, size_t cap) {
    while (*p == ' ' || *p == '\t' || *p == '\n')
        p++;
    if (*p != '"')
        return -1;
    p++;
    size_t i = 0;
    while (*p && *p != '"' && i + 1 < cap)
        out[i++] = *p++;
    out[i] = 0;
    return *p == '"' ? 0 : -1;
}

static int parse_table(const char *text, char *target, size_t tcap,
                       struct entry *ents, int cap) {
    const char *p = find_key(text, "target_function");
    if (!p || read_string(p, target, tcap) != 0)
        return -1;
    const char *e = find_key(text, "entries");
    if (!e)
        return -1;
    int n = 0;
    const char *cur = e;
    while (n < cap) {
        const char *obj = strchr(cur, '{');
        if (!obj)
            break;
        const char *end = strchr(obj, '}');
        if (!end)
            break;
        char tmp[512];
        size_t len = (size_t)(end - obj);
        if (len >= sizeof tmp)
            return -1;
        memcpy(tmp, obj, len);
        tmp[len] = 0;
        struct entry *en = &ents[n];
        const char *v;
        char num[32];
        if (!(v = find_key(tmp, "name")) || read_string(v, en->name, sizeof en->name))
            return -1;
        if (!(v = find_key(tmp, "kind")) || read_string(v, en->kind, sizeof en->kind))
            return -1;
        if (!(v = find_key(tmp, "bin_offset")) || read_string(v, num, sizeof num))
            return -1;
        en->bin_offset = strtoull(num, NULL, 16);
        if (!(v = find_key(tmp, "lib_offset")) || read_string(v, num, sizeof num))
            return -1;
        en->lib_offset = strtoull(num, NULL, 16);
        n++;
        cur = end + 1;
    }
    return n;
}

/* --- page protection protocol -------------------------------------------- */

static int protect_with_retry(void *page, size_t len, int prot) {
    /* 5 attempts, exponential backoff starting at 1 ms */
    long delay_ns = 1000000;
    for (int attempt = 0; attempt < 5; attempt++) {
        if (mprotect(page, len, prot) == 0)
            return 0;
        struct timespec ts = {0, delay_ns};
        nanosleep(&ts, NULL);
        delay_ns *= 2;
    }
    return -1;
}

static int prot_of(uintptr_t addr) {
    FILE *f = fopen("/proc/self/maps", "r");
    char line[1024];
    int prot = -1;
    if (!f)
        return -1;
    while (fgets(line, sizeof line, f)) {
        char *dash = strchr(line, '-');
        if (!dash)
            continue;
        uintptr_t start = strtoull(line, NULL, 16);
        uintptr_t end = strtoull(dash + 1, NULL, 16);
        if (addr < start || addr >= end)
            continue;
        char *sp = strchr(line, ' ');
        if (!sp)
            break;
        prot = 0;
        if (sp[1] == 'r')
            prot |= PROT_READ;
        if (sp[2] == 'w')
            prot |= PROT_WRITE;
        if (sp[3] == 'x')
            prot |= PROT_EXEC;
        break;
    }
    fclose(f);
    return prot;
}

static int write_protected(uintptr_t addr, const void *src, size_t len, int exec) {
    uintptr_t page = addr & ~0xfffUL;
    size_t span = (addr + len + 0xfff - page) & ~0xfffUL;
    int original = prot_of(addr);
    if (original < 0)
        return -1;
    int relaxed = exec ? (PROT_READ | PROT_WRITE | PROT_EXEC)
                       : (PROT_READ | PROT_WRITE);
    if (protect_with_retry((void *)page, span, relaxed) != 0)
        return -1;
    memcpy((void *)addr, src, len);
    if (protect_with_retry((void *)page, span, original) != 0)
        return -1;
    return 0;
}

/* --- debug barrier -------------------------------------------------------- */

static volatile sig_atomic_t g_resumed;

static void on_resume(int sig) {
    (void)sig;
    g_resumed = 1;
}

static void debug_barrier(void) {
    const char *pidfile = getenv("RESUB_PIDFILE");
    struct sigaction sa;
    memset(&sa, 0, sizeof sa);
    sa.sa_handler = on_resume;
    sigaction(SIGUSR1, &sa, NULL);
    if (pidfile) {
        int fd = open(pidfile, O_CREAT | O_TRUNC | O_WRONLY, 0644);
        if (fd < 0) {
            elog("pid file not writable; skipping barrier");
            return;
        }
        char buf[32];
        int n = snprintf(buf, sizeof buf, "%d\n", getpid());
        if (write(fd, buf, (size_t)n) != n) {
            close(fd);
            elog("pid file write failed; skipping barrier");
            return;
        }
        close(fd);
    }
    while (!g_resumed)
        pause();
}

/* --- trampoline ----------------------------------------------------------- */

static void emit_trampoline(unsigned char out[TRAMP_LEN], uint64_t cell) {
    /* push %rax; movabs cell,%rax; xchg %rax,(%rsp); ret */
    out[0] = 0x50;
    out[1] = 0x48;
    out[2] = 0xA1;
    memcpy(out + 3, &cell, 8);
    out[11] = 0x48;
    out[12] = 0x87;
    out[13] = 0x04;
    out[14] = 0x24;
    out[15] = 0xC3;
}

/* --- constructor ----------------------------------------------------------- */

__attribute__((constructor(65535))) static void resub_init(void) {
    const char *mapping = getenv("RESUB_MAPPING");
    const char *module = getenv("RESUB_MODULE");

    char exe[512];
    ssize_t n = readlink("/proc/self/exe", exe, sizeof exe - 1);
    if (n <= 0)
        return;
    exe[n] = 0;
    const char *want = getenv("BINARY_NAME");
    if (want) {
        const char *slash = strrchr(exe, '/');
        if (strcmp(slash ? slash + 1 : exe, want) != 0)
            return;
    }

    if (!mapping || !module) {
        /* tracing a baseline run: only the attach barrier is wanted */
        if (getenv("RESUB_DEBUG_WAIT"))
            debug_barrier();
        return;
    }

    void *h = dlopen(module, RTLD_NOW | RTLD_GLOBAL);
    if (!h) {
        die(dlerror());
    }
    uintptr_t bin_base = base_of_path(exe);
    uintptr_t lib_base = base_of_path(module);
    if (!bin_base || !lib_base) {
        /* dlopen may have resolved a relative path; retry via link map */
        struct link_map *lm = NULL;
        if (dlinfo(h, RTLD_DI_LINKMAP, &lm) == 0 && lm)
            lib_base = base_of_path(lm->l_name);
    }
    if (!bin_base || !lib_base) {
        die("image not mapped");
    }

    uint64_t cell_base = DEFAULT_CELL;
    const char *cell_env = getenv("RESUB_CELL_ADDR");
    if (cell_env)
        cell_base = strtoull(cell_env, NULL, 16);
    void *cell_page = mmap((void *)cell_base, 4096, PROT_READ | PROT_WRITE,
                           MAP_PRIVATE | MAP_ANONYMOUS | MAP_FIXED_NOREPLACE,
                           -1, 0);
    if (cell_page == MAP_FAILED || (uint64_t)(uintptr_t)cell_page != cell_base) {
        die("cell page map failed");
    }

    const char *only_fn = getenv("FUNCTION_NAME");
    int cell_idx = 0;

    char paths[4096];
    strncpy(paths, mapping, sizeof paths - 1);
    paths[sizeof paths - 1] = 0;
    char *save = NULL;
    for (char *path = strtok_r(paths, ":", &save); path;
         path = strtok_r(NULL, ":", &save)) {
        int fd = open(path, O_RDONLY);
        if (fd < 0) {
            die("mapping table unreadable");
        }
        ssize_t got = read(fd, g_buf, sizeof g_buf - 1);
        close(fd);
        if (got <= 0)
            continue;
        g_buf[got] = 0;

        char target[128];
        static struct entry ents[MAX_ENTRIES];
        int count = parse_table(g_buf, target, sizeof target, ents, MAX_ENTRIES);
        if (count < 0) {
            die("mapping table parse failed");
        }
        if (only_fn && strcmp(only_fn, target) != 0)
            continue;

        /* install order: write cell, patch module GOT, then hook the entry */
        uint64_t entry_bin = 0, entry_lib = 0;
        for (int i = 0; i < count; i++) {
            if (strcmp(ents[i].kind, "FunctionRedirect") == 0) {
                entry_bin = ents[i].bin_offset;
                entry_lib = ents[i].lib_offset;
            }
        }
        if (!entry_lib && !entry_bin) {
            die("table has no FunctionRedirect entry");
        }
        uint64_t cell_addr = cell_base + 8 * (uint64_t)cell_idx++;
        uint64_t substitute_va = lib_base + entry_lib;
        memcpy((void *)(uintptr_t)cell_addr, &substitute_va, 8);

        for (int i = 0; i < count; i++) {
            if (strcmp(ents[i].kind, "FunctionRedirect") == 0)
                continue;
            uint64_t value = bin_base + ents[i].bin_offset;
            if (write_protected(lib_base + ents[i].lib_offset, &value, 8, 0) != 0)
                die("GOT slot write failed");
        }

        unsigned char tramp[TRAMP_LEN];
        emit_trampoline(tramp, cell_addr);
        if (write_protected(bin_base + entry_bin, tramp, TRAMP_LEN, 1) != 0)
            die("entry hook failed");
    }

    if (getenv("RESUB_DEBUG_WAIT"))
        debug_barrier();
}
