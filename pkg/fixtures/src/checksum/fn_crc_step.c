__int64 __fastcall fn_crc_step(unsigned int a1, unsigned __int8 a2)
{
  unsigned int v2; // eax
  int i; // [rsp+8h]

  if ( !gPoly )
    crc_panic();
  v2 = a1 ^ a2;
  for ( i = 0; i < 8; ++i )
  {
    if ( (v2 & 1) != 0 )
      v2 = (v2 >> 1) ^ gPoly;
    else
      v2 = v2 >> 1;
  }
  return v2;
}
