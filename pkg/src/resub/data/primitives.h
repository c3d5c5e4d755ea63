/* Decompiler primitive mappings, version 1.
 *
 * Mirrors the decompiler's bundled definitions header for the subset of
 * primitives the restricted grammar accepts. Anything not listed here is
 * deliberately undefined so unresolved artifacts fail loudly at compile
 * time instead of being guessed at.
 */
#ifndef RESUB_PRIMITIVES_H
#define RESUB_PRIMITIVES_H

/* sized integer keywords (macros so "unsigned __int64" parses) */
#define __int8 char
#define __int16 short
#define __int32 int
#define __int64 long long

typedef unsigned char _BYTE;
typedef unsigned short _WORD;
typedef unsigned int _DWORD;
typedef unsigned long long _QWORD;
typedef int _BOOL4;
typedef long long _BOOL8;

/* calling-convention and attribute noise */
#define __fastcall
#define __cdecl
#define __stdcall
#define __usercall
#define __noreturn
#define __hidden

/* partial-register accessors */
#define LOBYTE(x) (*((unsigned char *)&(x)))
#define LOWORD(x) (*((unsigned short *)&(x)))
#define LODWORD(x) (*((unsigned int *)&(x)))
#define HIBYTE(x) (*((unsigned char *)&(x) + sizeof(x) - 1))
#define HIWORD(x) (*((unsigned short *)&(x) + sizeof(x) / 2 - 1))
#define HIDWORD(x) (*((unsigned int *)&(x) + 1))

#endif /* RESUB_PRIMITIVES_H */
