__int64 __fastcall fn_clamp(int a1)
{
  int v2; // [rsp+4h]

  v2 = a1;
  if ( v2 < 0 )
    v2 = 0;
  if ( v2 > (int)(signed char)gLim )
    v2 = (signed char)gLim;
  return (unsigned int)v2;
}
