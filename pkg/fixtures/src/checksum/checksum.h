#ifndef CHECKSUM_H
#define CHECKSUM_H

extern unsigned int gPoly;
extern unsigned int gSeed;

void crc_panic(void);

__int64 __fastcall fn_adler(unsigned __int8 *a1, int a2);
__int64 __fastcall fn_crc_step(unsigned int a1, unsigned __int8 a2);
__int64 __fastcall fn_mix(unsigned __int8 *a1, int a2);

#endif
