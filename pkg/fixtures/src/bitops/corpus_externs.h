extern unsigned __int8 gLim;
