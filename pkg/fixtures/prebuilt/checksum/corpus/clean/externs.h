extern unsigned int gPoly;
extern unsigned int gSeed;
void crc_panic(void);
