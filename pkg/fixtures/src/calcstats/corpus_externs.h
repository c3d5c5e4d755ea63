extern unsigned __int8 gFlags;
extern int gBias;
