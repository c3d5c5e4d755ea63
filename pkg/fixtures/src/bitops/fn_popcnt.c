__int64 __fastcall fn_popcnt(unsigned int a1)
{
  int v2; // [rsp+4h]
  unsigned int v3; // [rsp+8h]

  v2 = 0;
  v3 = a1;
  while ( v3 )
  {
    v2 = v2 + (v3 & 1);
    v3 = v3 >> 1;
  }
  return (unsigned int)v2;
}
